"""Positive-support parametric laws: Exponential, Gamma and Weibull.

Every piece of distribution math in the package goes through this module.
Parameters follow the rate convention used throughout: ``Gamma(rate, shape)``
has mean ``shape / rate`` so that ``Gamma(a, 1)`` is ``Exponential(a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, special

__all__ = [
    "DistributionError",
    "DivergenceError",
    "Family",
    "ParamDistribution",
    "exponential",
    "gamma",
    "weibull",
    "density",
    "log_density",
    "cdf",
    "survival",
    "log_survival",
    "quantile",
    "sample",
    "mean",
    "second_moment",
    "mgf",
    "lst",
]

# Above this shape the Erlang finite sum stops being cheaper than gammaincc.
_ERLANG_MAX_SHAPE = 64


class DistributionError(ValueError):
    """Invalid parameters or an argument outside the support."""


class DivergenceError(ArithmeticError):
    """A transform was requested outside its finiteness domain."""


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"
    WEIBULL = "weibull"


@dataclass(frozen=True)
class ParamDistribution:
    """A validated law on (0, inf).

    ``rate`` is used by Exponential and Gamma, ``shape`` by Gamma and Weibull,
    ``scale`` only by Weibull.  Use the :func:`exponential`, :func:`gamma`
    and :func:`weibull` constructors rather than filling fields by hand.
    """

    family: Family
    rate: float | None = None
    shape: float | None = None
    scale: float | None = None

    def __post_init__(self) -> None:
        try:
            fam = Family(self.family)
        except ValueError:
            raise DistributionError(f"unknown family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        needed = {
            Family.EXPONENTIAL: ("rate",),
            Family.GAMMA: ("rate", "shape"),
            Family.WEIBULL: ("shape", "scale"),
        }[fam]
        for name in ("rate", "shape", "scale"):
            value = getattr(self, name)
            if name in needed:
                if value is None:
                    raise DistributionError(f"{fam.value} needs parameter {name!r}")
                value = float(value)
                if not math.isfinite(value) or value <= 0.0:
                    raise DistributionError(f"{fam.value} {name} must be positive, got {value}")
                object.__setattr__(self, name, value)
            elif value is not None:
                raise DistributionError(f"{fam.value} takes no parameter {name!r}")
        if fam is Family.WEIBULL and self.shape < 1.0:
            raise DistributionError(f"weibull shape must be >= 1, got {self.shape}")

    def __str__(self) -> str:
        if self.family is Family.EXPONENTIAL:
            return f"Exp({self.rate:g})"
        if self.family is Family.GAMMA:
            return f"Ga({self.rate:g},{self.shape:g})"
        return f"Weibull({self.shape:g},{self.scale:g})"

    @property
    def is_exponential(self) -> bool:
        """True for every parametrisation that is an exponential law."""
        if self.family is Family.EXPONENTIAL:
            return True
        return self.shape == 1.0

    def exponential_rate(self) -> float:
        if self.family is Family.EXPONENTIAL:
            return self.rate
        if self.family is Family.GAMMA and self.shape == 1.0:
            return self.rate
        if self.family is Family.WEIBULL and self.shape == 1.0:
            return 1.0 / self.scale
        raise DistributionError(f"{self} is not exponential")

    def to_dict(self) -> dict:
        out = {"family": self.family.value}
        for name in ("rate", "shape", "scale"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


def exponential(rate: float) -> ParamDistribution:
    return ParamDistribution(Family.EXPONENTIAL, rate=rate)


def gamma(rate: float, shape: float) -> ParamDistribution:
    return ParamDistribution(Family.GAMMA, rate=rate, shape=shape)


def weibull(shape: float, scale: float) -> ParamDistribution:
    return ParamDistribution(Family.WEIBULL, shape=shape, scale=scale)


def _positive(x, strict: bool):
    arr = np.asarray(x, dtype=float)
    bad = (arr <= 0.0) if strict else (arr < 0.0)
    if np.any(bad | np.isnan(arr)):
        bound = "> 0" if strict else ">= 0"
        raise DistributionError(f"argument must be {bound}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def log_density(d: ParamDistribution, x):
    x = _positive(x, strict=True)
    if d.family is Family.EXPONENTIAL:
        res = math.log(d.rate) - d.rate * x
    elif d.family is Family.GAMMA:
        k = d.shape
        res = k * math.log(d.rate) + (k - 1.0) * np.log(x) - d.rate * x - special.gammaln(k)
    else:
        k, b = d.shape, d.scale
        z = x / b
        res = math.log(k / b) + (k - 1.0) * np.log(z) - z**k
    return _out(res)


def density(d: ParamDistribution, x):
    """Lebesgue density at ``x > 0``."""
    return _out(np.exp(log_density(d, x)))


def _erlang_survival(rate: float, shape: int, x):
    # sum_{i<shape} (rate x)^i e^{-rate x} / i!
    y = rate * np.asarray(x, dtype=float)
    term = np.exp(-y)
    total = term.copy()
    for i in range(1, shape):
        term = term * y / i
        total = total + term
    return total


def _is_small_integer(k: float) -> bool:
    return float(k).is_integer() and k <= _ERLANG_MAX_SHAPE


def survival(d: ParamDistribution, x):
    """P(X > x); the Gamma branch uses the upper incomplete gamma directly."""
    x = _positive(x, strict=False)
    if d.family is Family.EXPONENTIAL:
        res = np.exp(-d.rate * x)
    elif d.family is Family.GAMMA:
        if _is_small_integer(d.shape):
            res = _erlang_survival(d.rate, int(d.shape), x)
        else:
            res = special.gammaincc(d.shape, d.rate * x)
    else:
        res = np.exp(-((x / d.scale) ** d.shape))
    return _out(res)


def cdf(d: ParamDistribution, x):
    x = _positive(x, strict=False)
    if d.family is Family.EXPONENTIAL:
        res = -np.expm1(-d.rate * x)
    elif d.family is Family.GAMMA:
        # lower incomplete gamma: no cancellation near 0
        res = special.gammainc(d.shape, d.rate * x)
    else:
        res = -np.expm1(-((x / d.scale) ** d.shape))
    return _out(res)


def log_survival(d: ParamDistribution, x):
    x = _positive(x, strict=False)
    if d.family is Family.EXPONENTIAL:
        res = -d.rate * x
    elif d.family is Family.WEIBULL:
        res = -((x / d.scale) ** d.shape)
    else:
        sf = np.asarray(survival(d, x), dtype=float)
        with np.errstate(divide="ignore"):
            res = np.log(sf)
        if d.shape == 1.0:
            res = -d.rate * x
        elif np.any(sf < 1e-280):
            # log of the Erlang/incomplete-gamma tail without underflow
            y = d.rate * np.asarray(x, dtype=float)
            asym = (d.shape - 1.0) * np.log(np.maximum(y, 1e-300)) - y - special.gammaln(d.shape)
            res = np.where(sf < 1e-280, asym + np.log1p((d.shape - 1.0) / np.maximum(y, 1.0)), res)
    return _out(res)


def quantile(d: ParamDistribution, p):
    """Inverse CDF for ``p`` in [0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0.0) | (p >= 1.0)):
        raise DistributionError("quantile level must lie in [0, 1)")
    q = -np.log1p(-p)
    if d.family is Family.EXPONENTIAL:
        res = q / d.rate
    elif d.family is Family.GAMMA:
        res = special.gammaincinv(d.shape, p) / d.rate
    else:
        res = d.scale * q ** (1.0 / d.shape)
    return _out(res)


def upper_quantile(d: ParamDistribution, tail: float):
    """The point with survival probability ``tail`` (accurate for tiny tails)."""
    if not 0.0 < tail <= 1.0:
        raise DistributionError("tail probability must lie in (0, 1]")
    q = -math.log(tail)
    if d.family is Family.EXPONENTIAL:
        return q / d.rate
    if d.family is Family.GAMMA:
        return float(special.gammainccinv(d.shape, tail)) / d.rate
    return d.scale * q ** (1.0 / d.shape)


def sample(d: ParamDistribution, rng: np.random.Generator, size=None):
    """Draw from ``d`` using an externally owned generator.

    Exponential and Weibull use the inverse CDF on ``u = rng.random()``
    (``-ln(u)/rate`` and ``scale * (-ln u)**(1/shape)``); Gamma uses the
    generator's standard gamma sampler.  Exact zeros from underflow are
    redrawn so every value is strictly positive.
    """
    def draw(n):
        if d.family is Family.GAMMA:
            return rng.standard_gamma(d.shape, size=n) / d.rate
        u = 1.0 - rng.random(size=n)  # (0, 1]
        e = -np.log(u)
        if d.family is Family.EXPONENTIAL:
            return e / d.rate
        return d.scale * e ** (1.0 / d.shape)

    values = np.asarray(draw(size), dtype=float)
    if values.ndim == 0:
        while values <= 0.0:
            values = np.asarray(draw(None), dtype=float)
        return float(values)
    zero = values <= 0.0
    while np.any(zero):
        values[zero] = draw(int(zero.sum()))
        zero = values <= 0.0
    return values


def mean(d: ParamDistribution) -> float:
    if d.family is Family.EXPONENTIAL:
        return 1.0 / d.rate
    if d.family is Family.GAMMA:
        return d.shape / d.rate
    return d.scale * math.gamma(1.0 + 1.0 / d.shape)


def second_moment(d: ParamDistribution) -> float:
    if d.family is Family.EXPONENTIAL:
        return 2.0 / d.rate**2
    if d.family is Family.GAMMA:
        return d.shape * (d.shape + 1.0) / d.rate**2
    return d.scale**2 * math.gamma(1.0 + 2.0 / d.shape)


def mgf(d: ParamDistribution, c: float) -> float:
    """E[exp(c X)].

    Closed forms for Exponential and Gamma (finite iff ``c < rate``) and for
    Weibull with shape 1.  Other Weibull laws are integrated numerically; for
    shape > 1 the transform is finite for every real ``c``.
    """
    c = float(c)
    if c == 0.0:
        return 1.0
    if d.family in (Family.EXPONENTIAL, Family.GAMMA) or d.shape == 1.0:
        rate = d.rate if d.family is not Family.WEIBULL else 1.0 / d.scale
        shape = d.shape if d.family is Family.GAMMA else 1.0
        if c >= rate:
            raise DivergenceError(f"mgf of {d} diverges at c={c} (needs c < {rate})")
        return math.exp(shape * (math.log(rate) - math.log(rate - c)))
    k, b = d.shape, d.scale

    def integrand(z):
        # substitute x = b z
        return k * z ** (k - 1.0) * math.exp(c * b * z - z**k)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    if not math.isfinite(value) or value <= 0.0:
        raise DivergenceError(f"mgf of {d} failed to converge at c={c}")
    return value


def lst(d: ParamDistribution, s: float) -> float:
    """Laplace-Stieltjes transform E[exp(-s X)] for ``s >= 0``."""
    if s < 0.0:
        raise DistributionError("Laplace-Stieltjes argument must be >= 0")
    return mgf(d, -s)
