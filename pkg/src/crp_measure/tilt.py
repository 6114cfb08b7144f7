"""Changes of measure for compound renewal processes.

A claim tilt reweights the claim-size law by ``w = exp(gamma)`` with
``E_P[w(X_1)] = 1``.  Combined with a new interarrival law it defines a
measure ``Q`` whose density with respect to ``P`` on the information up to
time ``t`` is

    M_t = prod_{j <= N_t} w(X_j) * l'(W_j) / k'(W_j)
          * (1 - L(t - T_{N_t})) / (1 - K(t - T_{N_t}))

where ``k, K`` are the source interarrival density and CDF and ``l, L`` the
target ones.  For an exponential target the density can also be written in
terms of ``beta = gamma + alpha`` where ``alpha = ln(rate) + ln E_P[W_1]``.
Everything is evaluated in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate

from . import distributions as dist
from .distributions import Family, ParamDistribution
from .process import MeasureSpec, Path, PathBatch

__all__ = [
    "TiltKind",
    "ClaimTilt",
    "BetaTilt",
    "TiltReport",
    "DegenerateTailError",
    "UnsupportedTiltError",
    "identity_tilt",
    "tilt_from_density_ratio",
    "esscher_tilt",
    "log_linear_tilt",
    "custom_tilt",
    "beta_tilt",
    "beta_from_rate",
    "validate_tilt",
    "tilted_claim_law",
    "rrm_log_density",
    "rpm_log_density",
    "convert_to_cpp",
    "build_target_measure",
    "RRMDensity",
    "RPMDensity",
    "IdentityDensity",
]

# 1 - K below this makes the survival ratio meaningless in floating point.
LOG_TAIL_FLOOR = math.log(1e-300)


class DegenerateTailError(ArithmeticError):
    """The source survival factor underflowed on a path."""


class UnsupportedTiltError(NotImplementedError):
    """The tilted claim law has no closed form in the supported families."""


class TiltKind(str, Enum):
    DENSITY_RATIO = "density_ratio"
    ESSCHER = "esscher"
    LOG_LINEAR = "log_linear"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ClaimTilt:
    """Claim-size reweighting ``w(x) = exp(gamma(x))`` (link fixed to ``ln``).

    ``gamma`` must accept numpy arrays.  The descriptor fields record how the
    tilt was built so the tilted law can be recovered in closed form:

    * ``DENSITY_RATIO``: ``source`` and ``target`` laws;
    * ``ESSCHER``: ``c`` and ``source``;
    * ``LOG_LINEAR``: ``coefficients = (const, log_coef, lin_coef)`` for
      ``gamma(x) = const + log_coef * ln(x) + lin_coef * x``;
    * ``CUSTOM``: anything else.
    """

    kind: TiltKind
    gamma_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    source: ParamDistribution | None = None
    target: ParamDistribution | None = None
    c: float | None = None
    coefficients: tuple[float, float, float] | None = None
    label: str = ""

    def gamma(self, x):
        out = self.gamma_fn(np.asarray(x, dtype=float))
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def weight(self, x):
        return np.exp(self.gamma(x)) if np.ndim(x) else math.exp(self.gamma(x))

    @property
    def is_identity(self) -> bool:
        if self.kind is TiltKind.LOG_LINEAR:
            return self.coefficients == (0.0, 0.0, 0.0)
        if self.kind is TiltKind.ESSCHER:
            return self.c == 0.0
        if self.kind is TiltKind.DENSITY_RATIO:
            return self.source == self.target
        return False

    def describe(self) -> str:
        if self.kind is TiltKind.DENSITY_RATIO:
            return f"density-ratio {self.source} -> {self.target}"
        if self.kind is TiltKind.ESSCHER:
            return f"esscher c={self.c:g} on {self.source}"
        if self.kind is TiltKind.LOG_LINEAR:
            a, m, c = self.coefficients
            return f"log-linear gamma(x) = {a:.6g} + {m:g}*ln(x) + {c:.6g}*x"
        return f"custom {self.label}".strip()


def identity_tilt() -> ClaimTilt:
    return log_linear_tilt(0.0, 0.0, 0.0)


def tilt_from_density_ratio(source_claim: ParamDistribution, target_claim: ParamDistribution) -> ClaimTilt:
    """``w = density(target) / density(source)``."""

    def gamma_fn(x):
        return dist.log_density(target_claim, x) - dist.log_density(source_claim, x)

    return ClaimTilt(TiltKind.DENSITY_RATIO, gamma_fn, source=source_claim, target=target_claim)


def esscher_tilt(c: float, source_claim: ParamDistribution) -> ClaimTilt:
    """``w(x) = exp(c x) / E_P[exp(c X_1)]``; raises DivergenceError if the MGF is infinite."""
    c = float(c)
    log_norm = math.log(dist.mgf(source_claim, c))

    def gamma_fn(x):
        return c * x - log_norm

    return ClaimTilt(TiltKind.ESSCHER, gamma_fn, source=source_claim, c=c)


def log_linear_tilt(const: float, log_coef: float, lin_coef: float) -> ClaimTilt:
    """``gamma(x) = const + log_coef * ln(x) + lin_coef * x`` (not normalised here)."""
    coef = (float(const), float(log_coef), float(lin_coef))
    a, m, c = coef

    def gamma_fn(x):
        out = a + c * x
        if m != 0.0:
            out = out + m * np.log(x)
        return out * np.ones_like(x) if np.ndim(x) else out

    return ClaimTilt(TiltKind.LOG_LINEAR, gamma_fn, coefficients=coef)


def custom_tilt(gamma_fn: Callable[[np.ndarray], np.ndarray], label: str = "") -> ClaimTilt:
    return ClaimTilt(TiltKind.CUSTOM, gamma_fn, label=label)


@dataclass(frozen=True)
class BetaTilt:
    """``beta = gamma + alpha`` together with the Poisson rate it implies.

    ``implied_rate = exp(alpha) / E_P[W_1]``, i.e. ``alpha`` and the rate are
    linked by ``alpha = ln(rate) + ln E_P[W_1]``.
    """

    base: ClaimTilt
    alpha: float
    source_mean_interarrival: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", float(self.alpha))
        if not self.source_mean_interarrival > 0.0:
            raise ValueError("mean interarrival must be positive")
        resid = self.alpha - (math.log(self.implied_rate) + math.log(self.source_mean_interarrival))
        if abs(resid) > 1e-12 * max(1.0, abs(self.alpha)):
            raise ValueError(f"alpha/rate relation violated by {resid:.3g}")

    @property
    def implied_rate(self) -> float:
        return math.exp(self.alpha) / self.source_mean_interarrival

    def beta(self, x):
        return self.base.gamma(x) + self.alpha


def beta_tilt(base: ClaimTilt, alpha: float, source: MeasureSpec) -> BetaTilt:
    return BetaTilt(base, alpha, dist.mean(source.interarrival))


def beta_from_rate(base: ClaimTilt, rate: float, source: MeasureSpec) -> BetaTilt:
    """The ``alpha`` that makes the converted Poisson rate equal ``rate``."""
    if not rate > 0.0:
        raise ValueError("rate must be positive")
    mw = dist.mean(source.interarrival)
    return BetaTilt(base, math.log(rate) + math.log(mw), mw)


@dataclass(frozen=True)
class TiltReport:
    unit_mass: float
    moments: dict[int, float]
    converged: bool
    passed: bool
    message: str = ""


def _quad_positive(f, upper: float, tol: float) -> tuple[float, bool]:
    """Integrate f over (0, inf) split at ``upper``; flag non-convergence."""
    total = 0.0
    ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in ((0.0, upper), (upper, np.inf)):
            val, _err, info, *rest = integrate.quad(f, lo, hi, epsabs=tol, epsrel=1e-12, limit=500, full_output=1)
            if rest or not math.isfinite(val):
                ok = False
            total += val
    return total, ok


def validate_tilt(tilt: ClaimTilt, source_claim: ParamDistribution, moment_order: int = 0, tol: float = 1e-10) -> TiltReport:
    """Check ``E_P[w(X_1)] = 1`` and finiteness of ``E_P[X_1^l w(X_1)]`` for ``l <= moment_order``."""
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if moment_order not in (0, 1, 2):
        raise ValueError("moment_order must be 0, 1 or 2")
    upper = dist.upper_quantile(source_claim, 1e-12)

    def weighted(power):
        def f(x):
            with np.errstate(over="ignore"):
                val = math.exp(min(tilt.gamma(x) + dist.log_density(source_claim, x), 700.0))
            return val * x**power

        return f

    mass, ok = _quad_positive(weighted(0), upper, tol)
    moments: dict[int, float] = {}
    msgs = []
    for order in range(1, moment_order + 1):
        m, ok_m = _quad_positive(weighted(order), upper, tol)
        moments[order] = m
        if not ok_m:
            msgs.append(f"moment {order} did not converge")
        ok = ok and ok_m
    if not ok and not msgs:
        msgs.append("unit-mass quadrature did not converge")
    passed = ok and abs(mass - 1.0) <= tol
    if ok and not passed:
        msgs.append(f"|unit_mass - 1| = {abs(mass - 1.0):.3g} > {tol:g}")
    return TiltReport(mass, moments, ok, passed, "; ".join(msgs))


def _as_gamma_params(d: ParamDistribution) -> tuple[float, float] | None:
    if d.family is Family.EXPONENTIAL:
        return d.rate, 1.0
    if d.family is Family.GAMMA:
        return d.rate, d.shape
    if d.shape == 1.0:
        return 1.0 / d.scale, 1.0
    return None


def _gamma_law(rate: float, shape: float) -> ParamDistribution:
    if rate <= 0.0 or shape <= 0.0:
        raise UnsupportedTiltError(f"tilted law Ga({rate:g},{shape:g}) is not a probability law")
    return dist.exponential(rate) if shape == 1.0 else dist.gamma(rate, shape)


def tilted_claim_law(source_claim: ParamDistribution, tilt: ClaimTilt) -> ParamDistribution:
    """Closed form of the law with density ``w * density(source_claim)``."""
    if tilt.is_identity:
        return source_claim
    if tilt.kind is TiltKind.DENSITY_RATIO:
        if tilt.source != source_claim:
            raise ValueError(f"tilt was built for {tilt.source}, not {source_claim}")
        return tilt.target
    params = _as_gamma_params(source_claim)
    if tilt.kind is TiltKind.ESSCHER and params is not None:
        if tilt.source != source_claim:
            raise ValueError(f"tilt was built for {tilt.source}, not {source_claim}")
        rate, shape = params
        return _gamma_law(rate - tilt.c, shape)
    if tilt.kind is TiltKind.LOG_LINEAR and params is not None:
        _, log_coef, lin_coef = tilt.coefficients
        rate, shape = params
        return _gamma_law(rate - lin_coef, shape + log_coef)
    raise UnsupportedTiltError(f"no closed form for {tilt.describe()} on {source_claim}")


def _as_batch(paths) -> tuple[PathBatch, bool]:
    if isinstance(paths, Path):
        return paths.as_batch(), True
    if isinstance(paths, PathBatch):
        return paths, False
    raise TypeError("expected a Path or PathBatch")


def _masked_sum(values_fn, data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    safe = np.where(mask, data, 1.0)
    vals = np.asarray(values_fn(safe), dtype=float)
    return np.where(mask, vals, 0.0).sum(axis=1)


def _finish(log_m: np.ndarray, single: bool):
    if single:
        if np.isnan(log_m[0]):
            raise DegenerateTailError("source survival factor below 1e-300 on this path")
        return float(log_m[0])
    return log_m


def _source_log_survival(source: MeasureSpec, age: np.ndarray) -> np.ndarray:
    log_sf = np.asarray(dist.log_survival(source.interarrival, age), dtype=float)
    return np.where(log_sf < LOG_TAIL_FLOOR, np.nan, log_sf)


def rrm_log_density(paths, t: float, source: MeasureSpec, target, tilt: ClaimTilt):
    """``ln M_t`` for a renewal target; ``target`` is a MeasureSpec or its interarrival law.

    Returns a float for a :class:`Path` (raising :class:`DegenerateTailError`
    when the source survival factor underflows) and an array for a
    :class:`PathBatch`, with NaN marking degenerate paths.
    """
    batch, single = _as_batch(paths)
    target_w = target.interarrival if isinstance(target, MeasureSpec) else target
    mask = batch.observed_mask(t)
    k, lam = source.interarrival, target_w
    log_m = _masked_sum(tilt.gamma_fn, batch.claims, mask)
    log_m += _masked_sum(lambda w: dist.log_density(lam, w) - dist.log_density(k, w), batch.interarrivals, mask)
    age = t - batch.last_arrival_at(t)
    log_m += np.asarray(dist.log_survival(lam, age)) - _source_log_survival(source, age)
    return _finish(log_m, single)


def rpm_log_density(paths, t: float, source: MeasureSpec, beta: BetaTilt):
    """``ln M_t`` for a Poisson target written through ``beta = gamma + alpha``."""
    batch, single = _as_batch(paths)
    mask = batch.observed_mask(t)
    log_mw = math.log(beta.source_mean_interarrival)
    k = source.interarrival
    log_m = _masked_sum(beta.beta, batch.claims, mask)
    log_m -= mask.sum(axis=1) * log_mw
    log_m -= _masked_sum(lambda w: dist.log_density(k, w), batch.interarrivals, mask)
    age = t - batch.last_arrival_at(t)
    log_m -= float(t) * beta.implied_rate
    log_m -= _source_log_survival(source, age)
    return _finish(log_m, single)


def convert_to_cpp(source: MeasureSpec, beta: BetaTilt, label: str = "") -> MeasureSpec:
    """The compound Poisson measure selected by ``beta``."""
    return MeasureSpec(
        dist.exponential(beta.implied_rate),
        tilted_claim_law(source.claim, beta.base),
        label or (f"{source.label} (Poisson)" if source.label else ""),
    )


def build_target_measure(
    source: MeasureSpec, tilt: ClaimTilt, target_interarrival: ParamDistribution, label: str = ""
) -> MeasureSpec:
    """The compound renewal measure with interarrival law ``target_interarrival`` and tilted claims."""
    return MeasureSpec(target_interarrival, tilted_claim_law(source.claim, tilt), label or source.label)


@dataclass(frozen=True)
class RRMDensity:
    """Density towards a renewal target; only ``target_interarrival`` enters ``M_t``."""

    target_interarrival: ParamDistribution
    tilt: ClaimTilt

    def log_density(self, paths, t: float, source: MeasureSpec):
        return rrm_log_density(paths, t, source, self.target_interarrival, self.tilt)

    def target_spec(self, source: MeasureSpec) -> MeasureSpec:
        return build_target_measure(source, self.tilt, self.target_interarrival)


@dataclass(frozen=True)
class RPMDensity:
    """Density towards the compound Poisson measure selected by ``beta``."""

    beta: BetaTilt

    def log_density(self, paths, t: float, source: MeasureSpec):
        return rpm_log_density(paths, t, source, self.beta)

    def target_spec(self, source: MeasureSpec) -> MeasureSpec:
        return convert_to_cpp(source, self.beta)


class IdentityDensity:
    """``M_t = 1``: Q = P."""

    def log_density(self, paths, t: float, source: MeasureSpec):
        batch, single = _as_batch(paths)
        batch.observed_mask(t)  # horizon check
        return 0.0 if single else np.zeros(batch.n_paths)

    def target_spec(self, source: MeasureSpec) -> MeasureSpec:
        return source
