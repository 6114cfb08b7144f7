"""Renewal function and the Poisson characterisation through E[N_t].

``renewal_mean(K, t) = E[N_t] = sum_{n >= 1} K^{*n}(t)``, so the renewal
function is ``U(t) = 1 + renewal_mean(K, t)``.  Gamma laws are closed under
convolution (``Ga(r, k)^{*n} = Ga(r, n k)``); Weibull laws with shape > 1 use
a midpoint-mass grid convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from . import distributions as dist
from .distributions import Family, ParamDistribution

__all__ = [
    "renewal_mean",
    "renewal_function",
    "poisson_linearity_report",
    "lst_relation_check",
    "LinearityReport",
    "LSTReport",
]

GRID_CELLS_PER_MEAN = 2000
_MAX_TERMS = 1_000_000


def _gamma_params(K: ParamDistribution) -> tuple[float, float] | None:
    if K.family is Family.EXPONENTIAL:
        return K.rate, 1.0
    if K.family is Family.GAMMA:
        return K.rate, K.shape
    if K.shape == 1.0:
        return 1.0 / K.scale, 1.0
    return None


def _series_gamma(rate: float, shape: float, t: np.ndarray, tail_tol: float) -> np.ndarray:
    x = rate * t
    total = np.zeros_like(t)
    for n in range(1, _MAX_TERMS):
        term = special.gammainc(n * shape, x)
        total += term
        if term.max(initial=0.0) < tail_tol:
            return total
    raise RuntimeError("renewal series did not reach tail_tol")


def _series_grid(K: ParamDistribution, t: np.ndarray, tail_tol: float) -> np.ndarray:
    step = dist.mean(K) / GRID_CELLS_PER_MEAN
    t_max = float(t.max(initial=0.0))
    cells = int(math.ceil(t_max / step)) + 2
    edges = np.arange(cells + 1) * step
    # mass of cell [i*step, (i+1)*step) sits at its midpoint
    masses = np.diff(np.asarray(dist.cdf(K, edges), dtype=float))
    total = np.zeros_like(t)
    conv = masses.copy()
    for n in range(1, _MAX_TERMS):
        if n > 1:
            conv = np.clip(signal.fftconvolve(conv, masses)[:cells], 0.0, None)
        # n-fold sum of midpoints: index j sits at (j + n/2) * step; spread
        # each mass over its cell and read the CDF by linear interpolation
        edges_cdf = np.concatenate(([0.0], np.cumsum(conv)))
        v = t / step - n / 2.0 + 0.5
        term = np.interp(v, np.arange(cells + 1, dtype=float), edges_cdf, left=0.0)
        total += term
        if term.max(initial=0.0) < tail_tol:
            return total
    raise RuntimeError("renewal series did not reach tail_tol")


def renewal_mean(K: ParamDistribution, t, tail_tol: float = 1e-12):
    """E[N_t] for interarrival law ``K``; ``t`` may be a scalar or an array."""
    if not tail_tol > 0.0:
        raise ValueError("tail_tol must be positive")
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < 0.0):
        raise ValueError("t must be >= 0")
    params = _gamma_params(K)
    if params is not None:
        out = _series_gamma(*params, arr, tail_tol)
    else:
        out = _series_grid(K, arr, tail_tol)
    out = np.where(arr == 0.0, 0.0, out)
    return float(out[0]) if np.ndim(t) == 0 else out


def renewal_function(K: ParamDistribution, t, tail_tol: float = 1e-12):
    """U(t) = 1 + E[N_t]."""
    return 1.0 + renewal_mean(K, t, tail_tol)


@dataclass(frozen=True)
class LinearityReport:
    grid: tuple[float, ...]
    deviations: tuple[float, ...]
    max_rel_dev: float
    is_linear: bool


def poisson_linearity_report(K: ParamDistribution, grid, tail_tol: float = 1e-12) -> LinearityReport:
    """Relative distance of ``E[N_t]`` from ``t / E[W_1]`` over ``grid``.

    Linearity holds exactly only for exponential interarrivals, so
    ``is_linear`` (max deviation <= 10 * tail_tol) separates Poisson from
    other renewal processes.
    """
    ts = np.asarray(list(grid), dtype=float)
    if ts.size == 0 or np.any(ts <= 0.0):
        raise ValueError("grid must be non-empty and positive")
    linear = ts / dist.mean(K)
    dev = np.abs(renewal_mean(K, ts, tail_tol) - linear) / linear
    worst = float(dev.max())
    return LinearityReport(tuple(ts), tuple(float(d) for d in dev), worst, worst <= 10.0 * tail_tol)


@dataclass(frozen=True)
class LSTReport:
    s_values: tuple[float, ...]
    expected: tuple[float, ...]
    observed: tuple[float, ...]
    max_abs_dev: float
    boundary: tuple[float, ...]
    method: str


_BOUNDARY_S = 1e-8


def _numeric_renewal_lst(K: ParamDistribution, s: np.ndarray, tail_tol: float) -> np.ndarray:
    # U^(s) = U(0) + int_0^inf e^{-su} dm(u) = 1 + s int_0^inf e^{-su} m(u) du
    mu = dist.mean(K)
    length = 40.0 / float(s.min())
    step = min(0.005, mu / 100.0)
    u = np.linspace(0.0, length, int(math.ceil(length / step)) + 1)
    m = renewal_mean(K, u, tail_tol)
    out = np.empty_like(s)
    for i, si in enumerate(s):
        body = np.trapezoid(np.exp(-si * u) * m, u)
        # linear asymptote beyond the truncation point
        tail = math.exp(-si * length) * (m[-1] / si + 1.0 / (si * si * mu))
        out[i] = 1.0 + si * (body + tail)
    return out


def lst_relation_check(K: ParamDistribution, s_grid, tail_tol: float = 1e-12) -> LSTReport:
    """Check the transform relation between ``K`` and its renewal function.

    For exponential ``K`` the transform must equal ``rate / (rate + s)``.
    Otherwise ``U^(s) = 1 / (1 - K^(s))`` is compared with a trapezoid
    Laplace transform of ``renewal_mean`` on a truncated domain.  Points with
    ``s`` at the origin are reported in ``boundary`` and not evaluated.
    """
    s_all = np.asarray(list(s_grid), dtype=float)
    if s_all.size == 0 or np.any(s_all < 0.0):
        raise ValueError("s_grid must be non-empty and non-negative")
    boundary = tuple(float(s) for s in s_all if s < _BOUNDARY_S)
    s = s_all[s_all >= _BOUNDARY_S]
    if s.size == 0:
        return LSTReport((), (), (), 0.0, boundary, "none")
    if K.is_exponential:
        rate = K.exponential_rate()
        expected = rate / (rate + s)
        observed = np.array([dist.lst(K, si) for si in s])
        method = "exponential"
    else:
        expected = np.array([1.0 / (1.0 - dist.lst(K, si)) for si in s])
        observed = _numeric_renewal_lst(K, s, tail_tol)
        method = "renewal-transform"
    dev = float(np.max(np.abs(observed - expected)))
    return LSTReport(tuple(s), tuple(expected), tuple(observed), dev, boundary, method)
