"""Monte Carlo referee: importance sampling, martingale checks, weighted KS.

Path functionals have the signature ``phi(batch, t) -> ndarray`` and must only
look at information available at time ``t`` (arrivals in ``[0, t]``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, stats

from . import distributions as dist
from .process import MeasureSpec, PathBatch, sample_paths
from .tilt import BetaTilt

__all__ = [
    "EstimatorResult",
    "EventResult",
    "MartingaleReport",
    "KSReport",
    "MonteCarloError",
    "count",
    "aggregate",
    "observed_first_claim",
    "has_claim",
    "constant",
    "is_expectation",
    "direct_expectation",
    "agreement_z",
    "martingale_check",
    "surplus_martingale_check",
    "weighted_ks",
    "premium_density",
    "pemm_rate",
    "CheckRow",
    "write_check_csv",
    "CHECK_COLUMNS",
]

Functional = Callable[[PathBatch, float], np.ndarray]

MAX_EXCLUDED_FRACTION = 1e-3
MIN_EVENT_PATHS = 100
Z_LIMIT = 3.0


class MonteCarloError(RuntimeError):
    pass


def count(batch: PathBatch, t: float) -> np.ndarray:
    return batch.count_at(t).astype(float)


def aggregate(batch: PathBatch, t: float) -> np.ndarray:
    return batch.aggregate_at(t)


def observed_first_claim(batch: PathBatch, t: float) -> np.ndarray:
    """X_1 on {N_t >= 1}, else 0."""
    return np.where(batch.count_at(t) >= 1, batch.claims[:, 0], 0.0)


def has_claim(batch: PathBatch, t: float) -> np.ndarray:
    return (batch.count_at(t) >= 1).astype(float)


def constant(c: float) -> Functional:
    def phi(batch: PathBatch, t: float) -> np.ndarray:
        return np.full(batch.n_paths, float(c))

    return phi


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    std_error: float
    n_paths: int
    seed: int
    excluded: int = 0

    def z(self, expected: float) -> float:
        return _z(self.estimate - expected, self.std_error)


def _z(diff: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    if n > 0 and values.min() == values.max():
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def agreement_z(a: EstimatorResult, b: EstimatorResult) -> float:
    """z-score of the difference of two independent estimates."""
    return _z(a.estimate - b.estimate, math.hypot(a.std_error, b.std_error))


def _log_weights(density, batch: PathBatch, t: float, source: MeasureSpec) -> tuple[np.ndarray, np.ndarray]:
    log_m = np.asarray(density.log_density(batch, t, source), dtype=float)
    bad = np.isnan(log_m)
    if bad.mean() > MAX_EXCLUDED_FRACTION:
        raise MonteCarloError(
            f"{int(bad.sum())} of {batch.n_paths} paths have a degenerate survival tail"
        )
    return log_m, bad


def is_expectation(
    phi: Functional,
    source: MeasureSpec,
    density,
    t: float,
    n_paths: int,
    seed: int,
    *,
    horizon: float | None = None,
    given: Functional | None = None,
    workers: int = 1,
) -> EstimatorResult:
    """Estimate ``E_Q[phi]`` from paths simulated under ``source``.

    ``density`` is any object with ``log_density(batch, t, source)`` (for
    example :class:`~crp_measure.tilt.RRMDensity`).  With ``given`` (an
    indicator functional of an event known at ``t``) the self-normalised
    ratio ``E_P[phi 1_A M_t] / E_P[1_A M_t] = E_Q[phi | A]`` is returned,
    with a delta-method standard error.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    horizon = float(t) if horizon is None else horizon
    batch = sample_paths(source, horizon, n_paths, seed, workers=workers)
    log_m, bad = _log_weights(density, batch, t, source)
    keep = ~bad
    m = np.exp(log_m[keep])
    values = np.asarray(phi(batch, t), dtype=float)[keep]
    if given is None:
        est, se = _mean_se(values * m)
    else:
        a = np.asarray(given(batch, t), dtype=float)[keep] * m
        num = values * a
        den_mean = a.mean()
        if den_mean <= 0.0:
            raise MonteCarloError("conditioning event has zero estimated probability")
        est = float(num.mean() / den_mean)
        resid = (num - est * a) / den_mean
        se = float(resid.std(ddof=1) / math.sqrt(resid.size))
    return EstimatorResult(est, se, n_paths, seed, int(bad.sum()))


def direct_expectation(
    phi: Functional,
    spec: MeasureSpec,
    t: float,
    n_paths: int,
    seed: int,
    *,
    horizon: float | None = None,
    given: Functional | None = None,
    workers: int = 1,
) -> EstimatorResult:
    """Plain Monte Carlo mean of ``phi`` under ``spec`` (conditional on ``given`` if set)."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    horizon = float(t) if horizon is None else horizon
    batch = sample_paths(spec, horizon, n_paths, seed, workers=workers)
    values = np.asarray(phi(batch, t), dtype=float)
    if given is not None:
        values = values[np.asarray(given(batch, t), dtype=bool)]
        if values.size < 2:
            raise MonteCarloError("too few paths in conditioning event")
    est, se = _mean_se(values)
    return EstimatorResult(est, se, n_paths, seed)


@dataclass(frozen=True)
class EventResult:
    name: str
    n_in_event: int
    difference: float
    std_error: float
    z: float
    skipped: bool


@dataclass(frozen=True)
class MartingaleReport:
    s: float
    t: float
    events: tuple[EventResult, ...]
    passed: bool
    n_paths: int
    seed: int
    excluded: int = 0
    description: str = "{N_s=0}, {N_s=1}, {N_s>=2}, {S_s<=q} for empirical quartiles q of S_s"

    @property
    def z_scores(self) -> dict[str, float]:
        return {e.name: e.z for e in self.events if not e.skipped}

    @property
    def skipped(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.events if e.skipped)

    def event(self, name: str) -> EventResult:
        for e in self.events:
            if e.name == name:
                return e
        raise KeyError(name)


def _event_family(batch: PathBatch, s: float) -> list[tuple[str, np.ndarray]]:
    n_s = batch.count_at(s)
    s_s = batch.aggregate_at(s)
    events = [
        ("N_s=0", n_s == 0),
        ("N_s=1", n_s == 1),
        ("N_s>=2", n_s >= 2),
    ]
    for pct, q in zip((25, 50, 75), np.percentile(s_s, [25, 50, 75])):
        events.append((f"S_s<=q{pct}", s_s <= q))
    return events


def _event_tests(batch: PathBatch, s: float, increments: np.ndarray, keep: np.ndarray) -> list[EventResult]:
    out = []
    n = int(keep.sum())
    for name, ind in _event_family(batch, s):
        ind = ind & keep
        size = int(ind.sum())
        if size < MIN_EVENT_PATHS:
            out.append(EventResult(name, size, math.nan, math.nan, math.nan, True))
            continue
        diffs = np.where(ind, increments, 0.0)[keep]
        mean, se = _mean_se(diffs)
        out.append(EventResult(name, size, mean, se, _z(mean, se), False))
    return out


def _check_times(s: float, t: float, horizon: float | None) -> float:
    if not 0.0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    horizon = float(t) if horizon is None else horizon
    if t > horizon:
        raise ValueError("t beyond horizon")
    return horizon


def martingale_check(
    source: MeasureSpec,
    density,
    s: float,
    t: float,
    n_paths: int,
    seed: int,
    *,
    horizon: float | None = None,
    workers: int = 1,
) -> MartingaleReport:
    """Test ``E_P[1_A M_t] = E_P[1_A M_s]`` on a fixed family of events known at ``s``.

    Both densities are evaluated on the same paths, so each event gives a
    paired difference with its own standard error.  Events with fewer than
    100 paths are skipped and listed in the report.
    """
    horizon = _check_times(s, t, horizon)
    batch = sample_paths(source, horizon, n_paths, seed, workers=workers)
    log_s, bad_s = _log_weights(density, batch, s, source)
    log_t, bad_t = _log_weights(density, batch, t, source)
    keep = ~(bad_s | bad_t)
    increments = np.where(keep, np.exp(np.where(keep, log_t, 0.0)) - np.exp(np.where(keep, log_s, 0.0)), 0.0)
    if s == t:
        increments = np.zeros(batch.n_paths)
    events = _event_tests(batch, s, increments, keep)
    passed = all(abs(e.z) <= Z_LIMIT for e in events if not e.skipped)
    return MartingaleReport(s, t, tuple(events), passed, n_paths, seed, int((~keep).sum()))


def surplus_martingale_check(
    spec: MeasureSpec,
    s: float,
    t: float,
    n_paths: int,
    seed: int,
    *,
    premium_rate: float | None = None,
    horizon: float | None = None,
    workers: int = 1,
) -> MartingaleReport:
    """Martingale test for ``Z_t = S_t - t p`` under ``spec`` by direct simulation.

    ``p`` defaults to the premium density of ``spec``.  The test is expected
    to pass exactly when the interarrival law is exponential.
    """
    horizon = _check_times(s, t, horizon)
    rate = premium_density(spec) if premium_rate is None else premium_rate
    batch = sample_paths(spec, horizon, n_paths, seed, workers=workers)
    if s == t:
        increments = np.zeros(batch.n_paths)
    else:
        increments = (batch.aggregate_at(t) - t * rate) - (batch.aggregate_at(s) - s * rate)
    keep = np.ones(batch.n_paths, dtype=bool)
    events = _event_tests(batch, s, increments, keep)
    passed = all(abs(e.z) <= Z_LIMIT for e in events if not e.skipped)
    return MartingaleReport(s, t, tuple(events), passed, n_paths, seed)


@dataclass(frozen=True)
class KSReport:
    D: float
    p_value: float
    n: int
    n_eff: float
    unreliable: bool


def weighted_ks(samples, target_cdf: Callable[[np.ndarray], np.ndarray], weights=None) -> KSReport:
    """Kolmogorov-Smirnov distance between a weighted sample and ``target_cdf``.

    ``samples`` is either an array of values (with ``weights`` separately) or
    a sequence of ``(value, weight)`` pairs.  Weights are self-normalised and
    the p-value uses the Kish effective sample size ``(sum w)^2 / sum w^2``.
    """
    arr = np.asarray(samples, dtype=float)
    if weights is None and arr.ndim == 2 and arr.shape[1] == 2:
        values, w = arr[:, 0], arr[:, 1]
    else:
        values = arr.ravel()
        w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float).ravel()
    if values.size != w.size:
        raise ValueError("values and weights differ in length")
    if values.size < 1000:
        raise ValueError("weighted_ks needs at least 1000 samples")
    if np.any(~(w > 0.0)) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    order = np.argsort(values, kind="stable")
    x = values[order]
    w = w[order] / w.sum()
    upper = np.cumsum(w)
    lower = upper - w
    f = np.asarray(target_cdf(x), dtype=float)
    d = float(max(np.max(np.abs(upper - f)), np.max(np.abs(f - lower))))
    n_eff = float(1.0 / np.sum(w * w))
    n_round = max(1, int(round(n_eff)))
    p = float(stats.kstwo.sf(d, n_round))
    return KSReport(d, p, values.size, n_eff, n_eff < 100.0)


def premium_density(spec: MeasureSpec) -> float:
    """Expected claims per unit time, E[X_1] / E[W_1]."""
    return dist.mean(spec.claim) / dist.mean(spec.interarrival)


def pemm_rate(source: MeasureSpec, beta: BetaTilt) -> float:
    """``E_P[X_1 exp(beta(X_1))] / E_P[W_1]`` by quadrature.

    This is the premium rate that makes ``S_t - t * rate`` a martingale under
    the converted measure; it equals the converted premium density.
    """
    claim = source.claim

    def f(x):
        return x * math.exp(beta.beta(x) + dist.log_density(claim, x))

    upper = dist.upper_quantile(claim, 1e-12)
    a, _ = integrate.quad(f, 0.0, upper, epsabs=1e-12, epsrel=1e-12, limit=500)
    b, _ = integrate.quad(f, upper, np.inf, epsabs=1e-12, epsrel=1e-12, limit=500)
    return (a + b) / dist.mean(source.interarrival)


CHECK_COLUMNS = ("scenario", "check", "statistic", "value", "std_error", "z", "pass", "seed", "n_paths")


@dataclass(frozen=True)
class CheckRow:
    scenario: str
    check: str
    statistic: str
    value: float
    std_error: float = math.nan
    z: float = math.nan
    passed: bool = True
    seed: int | None = None
    n_paths: int | None = None

    def cells(self) -> list[str]:
        def num(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10g}"

        return [
            self.scenario,
            self.check,
            self.statistic,
            num(self.value),
            num(self.std_error),
            num(self.z),
            "true" if self.passed else "false",
            "" if self.seed is None else str(self.seed),
            "" if self.n_paths is None else str(self.n_paths),
        ]


def write_check_csv(rows: Iterable[CheckRow], out=None) -> str | None:
    buf = io.StringIO() if out is None else out
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CHECK_COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue() if out is None else None
