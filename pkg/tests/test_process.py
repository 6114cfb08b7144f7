import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from crp_measure import distributions as dist
from crp_measure.process import (
    CHUNK_SIZE,
    HorizonError,
    MeasureSpec,
    Path,
    PathBatch,
    ScriptedDraws,
    aggregate_at,
    count_at,
    sample_path,
    sample_paths,
    surplus_at,
    write_paths_csv,
)

POISSON = MeasureSpec(dist.exponential(2.0), dist.exponential(1.0))
GAMMA = MeasureSpec(dist.gamma(2.0, 2.0), dist.gamma(3.0, 2.0))


def scripted(w, x=None, horizon=5.0):
    return sample_path(POISSON, horizon, ScriptedDraws(w, x))


def test_scripted_path_counts_and_boundaries():
    p = scripted([1.0, 2.0, 1.5, 3.0], [0.5, 1.0, 2.0, 4.0])
    np.testing.assert_allclose(p.arrival_times, [1.0, 3.0, 4.5, 7.5])
    assert count_at(p, 0.0) == 0
    assert count_at(p, 0.999) == 0
    # an arrival at exactly t is counted
    assert count_at(p, 1.0) == 1
    assert count_at(p, 3.0) == 2
    assert count_at(p, 5.0) == 3
    assert aggregate_at(p, 4.5) == pytest.approx(3.5)
    assert p.last_arrival_at(4.0) == 3.0
    assert p.last_arrival_at(0.5) == 0.0
    assert surplus_at(p, 4.0, 1.0) == pytest.approx(1.5 - 4.0)


def test_scripted_claims_default_to_one():
    p = scripted([2.0, 4.0])
    assert aggregate_at(p, 5.0) == 1.0


def test_scripted_exhaustion_raises():
    with pytest.raises(ValueError):
        scripted([1.0, 1.0])


def test_horizon_errors():
    p = scripted([1.0, 6.0])
    with pytest.raises(HorizonError):
        p.count_at(5.5)
    with pytest.raises(HorizonError):
        p.count_at(-0.1)


def test_path_validation():
    with pytest.raises(ValueError):
        Path([1.0, 1.0], [1.0, 1.0], 5.0)  # no overshoot
    with pytest.raises(ValueError):
        Path([6.0, 1.0], [1.0, 1.0], 5.0)  # two arrivals past horizon
    with pytest.raises(ValueError):
        Path([-1.0, 7.0], [1.0, 1.0], 5.0)
    with pytest.raises(TypeError):
        MeasureSpec(dist.exponential(1.0), "Exp(1)")


def test_paths_are_immutable():
    p = scripted([1.0, 6.0])
    with pytest.raises(ValueError):
        p.interarrivals[0] = 3.0


def test_batch_matches_single_paths():
    batch = sample_paths(GAMMA, 4.0, 300, seed=11)
    for i in range(0, 300, 37):
        p = batch.path(i)
        for t in (0.0, 0.7, 2.0, 4.0):
            assert batch.count_at(t)[i] == p.count_at(t)
            assert batch.aggregate_at(t)[i] == pytest.approx(p.aggregate_at(t))
            assert batch.last_arrival_at(t)[i] == p.last_arrival_at(t)
    assert np.all(batch.arrival_times[np.arange(300), batch.lengths - 1] > 4.0)
    assert np.all(batch.count_at(4.0) == batch.lengths - 1)


def test_sampling_is_reproducible_and_worker_independent():
    n = CHUNK_SIZE + 500
    a = sample_paths(GAMMA, 3.0, n, seed=5)
    b = sample_paths(GAMMA, 3.0, n, seed=5, workers=4)
    np.testing.assert_array_equal(a.interarrivals, b.interarrivals)
    np.testing.assert_array_equal(a.claims, b.claims)
    c = sample_paths(GAMMA, 3.0, n, seed=6)
    assert not np.array_equal(a.count_at(3.0), c.count_at(3.0))


def test_poisson_count_distribution():
    batch = sample_paths(POISSON, 3.0, 20000, seed=1)
    n = batch.count_at(3.0)
    assert abs(n.mean() - 6.0) < 4 * np.sqrt(6.0 / 20000)
    # chi-square against Poisson(6) on pooled cells
    k = np.arange(0, 13)
    obs = np.array([np.sum(n == i) for i in k[:-1]] + [np.sum(n >= 12)])
    probs = np.append(stats.poisson.pmf(k[:-1], 6.0), stats.poisson.sf(11, 6.0))
    assert stats.chisquare(obs, probs * n.size).pvalue > 1e-3


def test_claims_independent_of_counts():
    batch = sample_paths(GAMMA, 3.0, 20000, seed=2)
    x1 = batch.first_claim()
    n = batch.count_at(3.0)
    assert abs(np.corrcoef(x1, n)[0, 1]) < 4 / np.sqrt(20000)


def test_subset_and_concatenate_roundtrip():
    batch = sample_paths(GAMMA, 2.0, 100, seed=3)
    head, tail = batch.subset(slice(0, 40)), batch.subset(slice(40, 100))
    joined = PathBatch.concatenate([head, tail])
    np.testing.assert_array_equal(joined.count_at(2.0), batch.count_at(2.0))
    np.testing.assert_allclose(joined.aggregate_at(1.3), batch.aggregate_at(1.3))
    again = PathBatch.from_paths([batch.path(i) for i in range(100)])
    np.testing.assert_array_equal(again.lengths, batch.lengths)


def test_csv_output():
    batch = PathBatch.from_paths([scripted([1.0, 5.0], [2.0, 3.0]), scripted([6.0], [1.5])])
    text = write_paths_csv(batch)
    lines = text.strip().splitlines()
    assert lines[0] == "path_id,n,W_n,T_n,X_n"
    assert lines[1:] == ["0,1,1.0,1.0,2.0", "0,2,5.0,6.0,3.0", "1,1,6.0,6.0,1.5"]
    buf = io.StringIO()
    assert write_paths_csv(batch, buf) is None and buf.getvalue() == text


@settings(max_examples=50, deadline=None)
@given(
    waits=st.lists(st.floats(0.01, 2.0), min_size=1, max_size=30),
    s=st.floats(0.0, 1.0),
    t=st.floats(0.0, 1.0),
)
def test_count_and_aggregate_monotone(waits, s, t):
    horizon = 3.0
    total = sum(waits)
    if total <= horizon:
        waits = waits + [horizon - total + 0.5]
    p = scripted(waits, [1.0] * 64, horizon=horizon)
    lo, hi = sorted((s * horizon, t * horizon))
    assert p.count_at(lo) <= p.count_at(hi)
    assert p.aggregate_at(lo) <= p.aggregate_at(hi)
    assert p.count_at(hi) == np.sum(np.cumsum(p.interarrivals) <= hi)
