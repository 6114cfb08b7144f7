"""Scenario definitions: the built-in catalog and TOML scenario files.

A scenario fixes a source model, a claim tilt, the target interarrival
structure (a Poisson rate through ``alpha``, or a renewal law) and the Monte
Carlo settings.  File format::

    name = "my-case"
    horizon = 5.0
    t_grid = [1.0, 5.0]
    n_paths = 20000
    seed = 42

    [source.interarrival]
    family = "gamma"
    rate = 2.0
    shape = 2.0

    [source.claim]
    family = "exponential"
    rate = 1.0

    [tilt]
    kind = "esscher"        # density-ratio | esscher | log-linear | table
    c = 0.5

    [measure]
    kind = "poisson"        # or "renewal" with an [measure.interarrival] table
    alpha = 0.0             # or rate = ...
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from . import distributions as dist
from .distributions import ParamDistribution
from .process import MeasureSpec
from .tilt import (
    BetaTilt,
    ClaimTilt,
    RPMDensity,
    RRMDensity,
    beta_from_rate,
    beta_tilt,
    build_target_measure,
    convert_to_cpp,
    custom_tilt,
    esscher_tilt,
    log_linear_tilt,
    tilt_from_density_ratio,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["Scenario", "ConfigError", "BUILTIN", "builtin_scenarios", "load_scenario", "find_scenarios", "resolve"]


class ConfigError(ValueError):
    """A scenario file or override that cannot be turned into a valid model."""


@dataclass(frozen=True)
class Scenario:
    name: str
    source: MeasureSpec
    tilt: ClaimTilt
    horizon: float
    t_grid: tuple[float, ...]
    n_paths: int = 20000
    seed: int = 42
    alpha: float | None = None
    target_interarrival: ParamDistribution | None = None
    expect_loading: bool = False
    description: str = ""

    def __post_init__(self) -> None:
        if (self.alpha is None) == (self.target_interarrival is None):
            raise ConfigError(f"{self.name}: give exactly one of alpha or a target interarrival law")
        if not self.horizon > 0.0:
            raise ConfigError(f"{self.name}: horizon must be positive")
        grid = tuple(float(t) for t in self.t_grid)
        if not grid or any(t <= 0.0 or t > self.horizon for t in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError(f"{self.name}: t_grid must be increasing values in (0, horizon]")
        object.__setattr__(self, "t_grid", grid)
        if self.n_paths < 1000:
            raise ConfigError(f"{self.name}: n_paths must be >= 1000")

    @property
    def is_poisson_target(self) -> bool:
        return self.alpha is not None

    @property
    def beta(self) -> BetaTilt:
        if self.alpha is None:
            raise AttributeError("renewal-target scenario has no beta")
        return beta_tilt(self.tilt, self.alpha, self.source)

    def density(self):
        if self.alpha is not None:
            return RPMDensity(self.beta)
        return RRMDensity(self.target_interarrival, self.tilt)

    def target_spec(self) -> MeasureSpec:
        if self.alpha is not None:
            return convert_to_cpp(self.source, self.beta, label=f"{self.name} Q")
        return build_target_measure(self.source, self.tilt, self.target_interarrival, label=f"{self.name} Q")

    def cpp_beta(self) -> BetaTilt:
        """beta for the Poisson conversion (alpha = 0 for renewal targets)."""
        return self.beta if self.alpha is not None else beta_tilt(self.tilt, 0.0, self.source)

    def cpp_spec(self) -> MeasureSpec:
        return convert_to_cpp(self.source, self.cpp_beta(), label=f"{self.name} CPP")

    def with_overrides(self, *, seed=None, n_paths=None, horizon=None) -> "Scenario":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if n_paths is not None:
            changes["n_paths"] = int(n_paths)
        if horizon is not None:
            horizon = float(horizon)
            changes["horizon"] = horizon
            changes["t_grid"] = tuple(t for t in self.t_grid if t <= horizon) or (horizon,)
        return replace(self, **changes) if changes else self


def _example_2_1() -> Scenario:
    theta, rho = 1.0, 1.5
    p_claim, q_claim = dist.exponential(1.0), dist.exponential(0.8)
    return Scenario(
        name="example-2.1",
        source=MeasureSpec(dist.exponential(theta), p_claim, "example-2.1 P"),
        tilt=tilt_from_density_ratio(p_claim, q_claim),
        target_interarrival=dist.exponential(rho),
        horizon=5.0,
        t_grid=(1.0, 2.5, 5.0),
        description="Poisson(1) -> Poisson(1.5), claims Exp(1) -> Exp(0.8)",
    )


def _example_2_2() -> Scenario:
    p_claim, q_claim = dist.exponential(1.0), dist.exponential(2.0)
    return Scenario(
        name="example-2.2",
        source=MeasureSpec(dist.gamma(1.0, 2.0), p_claim, "example-2.2 P"),
        tilt=tilt_from_density_ratio(p_claim, q_claim),
        target_interarrival=dist.gamma(1.5, 3.0),
        horizon=10.0,
        t_grid=(2.0, 5.0, 10.0),
        description="Ga(1,2) -> Ga(1.5,3) interarrivals, claims Exp(1) -> Exp(2)",
    )


def _example_3_1() -> Scenario:
    xi, b, zeta, rho = 2.0, 2.0, 1.5, 1.0
    p_claim = dist.gamma(b, 2.0)
    source = MeasureSpec(dist.gamma(xi, 2.0), p_claim, "example-3.1 P")
    tilt = tilt_from_density_ratio(p_claim, dist.exponential(zeta))
    return Scenario(
        name="example-3.1",
        source=source,
        tilt=tilt,
        alpha=beta_from_rate(tilt, rho, source).alpha,
        horizon=3.0,
        t_grid=(1.0, 2.0, 3.0),
        description="Ga(2,2) interarrivals to Poisson(1), claims Ga(2,2) -> Exp(1.5)",
    )


def _example_4_1() -> Scenario:
    xi, k, d, zeta, c = 1.5, 1.5, 1.2, 2.0, 2.05
    p_claim = dist.gamma(zeta, 2.0)
    source = MeasureSpec(dist.gamma(xi, k), p_claim, "example-4.1 P")
    ex = dist.mean(p_claim)
    tilt = log_linear_tilt(math.log(ex / (2.0 * c)), -1.0, 2.0 * (c - 1.0) / (c * ex))
    return Scenario(
        name="example-4.1",
        source=source,
        tilt=tilt,
        alpha=math.log(xi / d * dist.mean(source.interarrival)),
        horizon=3.0,
        t_grid=(1.0, 2.0, 3.0),
        expect_loading=True,
        description="Ga(1.5,1.5) interarrivals, claims Ga(2,2) -> Exp(2/2.05), rate xi/d with d=1.2",
    )


def _example_4_2() -> Scenario:
    eta, c = 1.0, 0.3
    p_claim = dist.exponential(eta)
    return Scenario(
        name="example-4.2",
        source=MeasureSpec(dist.weibull(1.5, 1.0), p_claim, "example-4.2 P"),
        tilt=esscher_tilt(c, p_claim),
        alpha=0.0,
        horizon=3.0,
        t_grid=(1.0, 2.0, 3.0),
        expect_loading=True,
        description="Weibull(1.5,1) interarrivals, claims Exp(1) -> Exp(0.7)",
    )


def _example_4_3() -> Scenario:
    xi, a, b, c = 2.0, 2.0, 3.0, 1.0
    p_claim = dist.gamma(b, a)
    return Scenario(
        name="example-4.3",
        source=MeasureSpec(dist.gamma(xi, 2.0), p_claim, "example-4.3 P"),
        tilt=esscher_tilt(c, p_claim),
        alpha=0.0,
        horizon=3.0,
        t_grid=(1.0, 2.0, 3.0),
        expect_loading=True,
        description="Ga(2,2) interarrivals, Esscher c=1 on Ga(3,2) claims",
    )


_BUILDERS = {
    "example-2.1": _example_2_1,
    "example-2.2": _example_2_2,
    "example-3.1": _example_3_1,
    "example-4.1": _example_4_1,
    "example-4.2": _example_4_2,
    "example-4.3": _example_4_3,
}
BUILTIN = tuple(_BUILDERS)


def builtin_scenarios() -> dict[str, Scenario]:
    return {name: build() for name, build in _BUILDERS.items()}


def _law(table, where: str) -> ParamDistribution:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table with a 'family' key")
    fam = str(table.get("family", "")).lower()
    aliases = {"exp": "exponential", "ga": "gamma", "wei": "weibull"}
    fam = aliases.get(fam, fam)
    params = {k: table[k] for k in ("rate", "shape", "scale") if k in table}
    extra = set(table) - {"family", "rate", "shape", "scale"}
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    try:
        return ParamDistribution(fam, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _table_tilt(xs, gs) -> ClaimTilt:
    x = np.asarray(xs, dtype=float)
    g = np.asarray(gs, dtype=float)
    if x.ndim != 1 or x.shape != g.shape or x.size < 2 or np.any(np.diff(x) <= 0.0):
        raise ConfigError("tilt table needs increasing x values and matching gamma values")

    def gamma_fn(v):
        return np.interp(v, x, g)

    return custom_tilt(gamma_fn, label=f"table[{x.size}]")


def _tilt(table, claim: ParamDistribution) -> ClaimTilt:
    kind = str(table.get("kind", "")).lower().replace("_", "-")
    try:
        if kind == "density-ratio":
            return tilt_from_density_ratio(claim, _law(table.get("target"), "tilt.target"))
        if kind == "esscher":
            return esscher_tilt(float(table["c"]), claim)
        if kind == "log-linear":
            return log_linear_tilt(float(table["const"]), float(table["log_coef"]), float(table["lin_coef"]))
        if kind == "table":
            return _table_tilt(table["x"], table["gamma"])
    except KeyError as exc:
        raise ConfigError(f"tilt: missing key {exc}") from None
    except (ArithmeticError, ValueError) as exc:
        raise ConfigError(f"tilt: {exc}") from None
    raise ConfigError(f"tilt: unknown kind {kind!r}")


def scenario_from_dict(data: dict, default_name: str = "") -> Scenario:
    try:
        name = str(data.get("name", default_name))
        src = data["source"]
        source = MeasureSpec(_law(src.get("interarrival"), "source.interarrival"), _law(src.get("claim"), "source.claim"), f"{name} P")
        tilt = _tilt(data.get("tilt", {}), source.claim)
        measure = data.get("measure", {})
        mkind = str(measure.get("kind", "poisson")).lower()
        alpha = target = None
        if mkind == "poisson":
            if "alpha" in measure and "rate" in measure:
                raise ConfigError("measure: give alpha or rate, not both")
            if "rate" in measure:
                alpha = beta_from_rate(tilt, float(measure["rate"]), source).alpha
            else:
                alpha = float(measure.get("alpha", 0.0))
        elif mkind == "renewal":
            target = _law(measure.get("interarrival"), "measure.interarrival")
        else:
            raise ConfigError(f"measure: unknown kind {mkind!r}")
        horizon = float(data["horizon"])
        return Scenario(
            name=name,
            source=source,
            tilt=tilt,
            alpha=alpha,
            target_interarrival=target,
            horizon=horizon,
            t_grid=tuple(data.get("t_grid", (horizon,))),
            n_paths=int(data.get("n_paths", 20000)),
            seed=int(data.get("seed", 42)),
            expect_loading=bool(data.get("expect_loading", False)),
            description=str(data.get("description", "")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_scenario(path) -> Scenario:
    path = FsPath(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return scenario_from_dict(data, default_name=path.stem)


def find_scenarios(config_dir=None) -> dict[str, Scenario | FsPath]:
    """Built-ins plus every ``*.toml`` in ``config_dir`` (files are loaded lazily)."""
    found: dict[str, Scenario | FsPath] = dict(builtin_scenarios())
    if config_dir is not None:
        root = FsPath(config_dir)
        if root.is_dir():
            for p in sorted(root.glob("*.toml")):
                found.setdefault(p.stem, p)
    return found


def resolve(name: str, config_dir=None) -> Scenario:
    if name in _BUILDERS:
        return _BUILDERS[name]()
    if name.endswith(".toml") and FsPath(name).is_file():
        return load_scenario(name)
    entry = find_scenarios(config_dir).get(name)
    if entry is None:
        raise ConfigError(f"unknown scenario {name!r}")
    return entry if isinstance(entry, Scenario) else load_scenario(entry)
