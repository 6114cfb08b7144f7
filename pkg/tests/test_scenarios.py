import math
from pathlib import Path

import numpy as np
import pytest

from crp_measure import distributions as dist
from crp_measure.scenarios import BUILTIN, ConfigError, builtin_scenarios, find_scenarios, load_scenario, resolve, scenario_from_dict
from crp_measure.tilt import tilted_claim_law, validate_tilt

SAMPLE_DIR = Path(__file__).resolve().parent.parent / "scenarios"

EXPECTED_Q_CLAIMS = {
    "example-2.1": dist.exponential(0.8),
    "example-2.2": dist.exponential(2.0),
    "example-3.1": dist.exponential(1.5),
    "example-4.1": dist.exponential(2.0 / 2.05),
    "example-4.2": dist.exponential(0.7),
    "example-4.3": dist.gamma(2.0, 2.0),
}


@pytest.mark.parametrize("name", BUILTIN)
def test_builtin_tilts_are_normalised(name):
    sc = resolve(name)
    assert validate_tilt(sc.tilt, sc.source.claim, moment_order=1).passed


@pytest.mark.parametrize("name", BUILTIN)
def test_builtin_target_claim_laws(name):
    sc = resolve(name)
    got = tilted_claim_law(sc.source.claim, sc.tilt)
    want = EXPECTED_Q_CLAIMS[name]
    assert got.family == want.family
    assert dist.mean(got) == pytest.approx(dist.mean(want), rel=1e-12)
    assert sc.target_spec().claim == got


def test_catalog_specifics():
    sc = builtin_scenarios()
    assert sc["example-3.1"].beta.alpha == pytest.approx(0.0, abs=1e-15)
    assert sc["example-3.1"].beta.implied_rate == pytest.approx(1.0)
    assert sc["example-4.1"].beta.implied_rate == pytest.approx(1.5 / 1.2)
    assert sc["example-4.3"].target_spec().interarrival == dist.exponential(1.0)
    assert sc["example-2.2"].target_spec().interarrival == dist.gamma(1.5, 3.0)
    # renewal targets convert with alpha = 0
    assert sc["example-2.2"].cpp_beta().alpha == 0.0
    assert sc["example-2.2"].cpp_spec().interarrival == dist.exponential(0.5)
    for name in ("example-4.1", "example-4.2", "example-4.3"):
        s = sc[name]
        assert dist.mean(s.target_spec().claim) / dist.mean(s.target_spec().interarrival) > dist.mean(
            s.source.claim
        ) / dist.mean(s.source.interarrival)


def test_overrides():
    sc = resolve("example-2.2").with_overrides(seed=3, n_paths=5000, horizon=5.0)
    assert (sc.seed, sc.n_paths, sc.horizon, sc.t_grid) == (3, 5000, 5.0, (2.0, 5.0))


def test_sample_config_loads():
    sc = load_scenario(SAMPLE_DIR / "gamma-esscher.toml")
    assert sc.name == "gamma-esscher" and sc.seed == 7
    assert sc.beta.implied_rate == pytest.approx(1.2)
    assert sc.target_spec().claim == dist.gamma(2.5, 2.0)
    assert "gamma-esscher" in find_scenarios(SAMPLE_DIR)
    assert resolve("gamma-esscher", SAMPLE_DIR).t_grid == (1.0, 3.0)


BASE = {
    "horizon": 2.0,
    "source": {"interarrival": {"family": "exp", "rate": 1.0}, "claim": {"family": "exp", "rate": 1.0}},
    "tilt": {"kind": "density-ratio", "target": {"family": "exp", "rate": 0.5}},
}


def with_(**changes):
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    data.update(changes)
    return data


def test_dict_variants():
    assert scenario_from_dict(with_(), "x").alpha == 0.0
    renewal = scenario_from_dict(with_(measure={"kind": "renewal", "interarrival": {"family": "ga", "rate": 2.0, "shape": 2.0}}))
    assert renewal.target_interarrival == dist.gamma(2.0, 2.0)
    table = scenario_from_dict(with_(tilt={"kind": "table", "x": [0.0, 100.0], "gamma": [0.0, 0.0]}))
    assert table.tilt.gamma(np.array([1.0, 5.0])).tolist() == [0.0, 0.0]
    ll = scenario_from_dict(with_(tilt={"kind": "log_linear", "const": math.log(0.5), "log_coef": 0.0, "lin_coef": 0.5}))
    assert ll.target_spec().claim == dist.exponential(0.5)


@pytest.mark.parametrize(
    "data",
    [
        {"horizon": 1.0},
        with_(horizon=-1.0),
        with_(n_paths=10),
        with_(t_grid=[3.0]),
        with_(tilt={"kind": "mystery"}),
        with_(tilt={"kind": "esscher", "c": 5.0}),
        with_(tilt={"kind": "esscher"}),
        with_(measure={"kind": "poisson", "alpha": 0.0, "rate": 1.0}),
        with_(measure={"kind": "lévy"}),
        with_(source={"interarrival": {"family": "exp", "rate": -1.0}, "claim": {"family": "exp", "rate": 1.0}}),
        with_(source={"interarrival": {"family": "exp", "rate": 1.0, "bogus": 1}, "claim": {"family": "exp", "rate": 1.0}}),
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        scenario_from_dict(data, "bad")


def test_unknown_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        resolve("no-such-scenario")
    bad = tmp_path / "broken.toml"
    bad.write_text("horizon = [")
    with pytest.raises(ConfigError):
        resolve("broken", tmp_path)
