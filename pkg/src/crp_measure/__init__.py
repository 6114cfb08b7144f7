"""Compound renewal processes under progressively equivalent changes of measure."""

from .distributions import DistributionError, DivergenceError, Family, ParamDistribution, exponential, gamma, weibull
from .montecarlo import (
    EstimatorResult,
    KSReport,
    MartingaleReport,
    MonteCarloError,
    direct_expectation,
    is_expectation,
    martingale_check,
    pemm_rate,
    premium_density,
    surplus_martingale_check,
    weighted_ks,
)
from .process import HorizonError, MeasureSpec, Path, PathBatch, ScriptedDraws, sample_path, sample_paths
from .renewal import lst_relation_check, poisson_linearity_report, renewal_function, renewal_mean
from .scenarios import BUILTIN, ConfigError, Scenario, builtin_scenarios, load_scenario, resolve
from .tilt import (
    BetaTilt,
    ClaimTilt,
    DegenerateTailError,
    RPMDensity,
    RRMDensity,
    beta_from_rate,
    beta_tilt,
    build_target_measure,
    convert_to_cpp,
    esscher_tilt,
    identity_tilt,
    log_linear_tilt,
    rpm_log_density,
    rrm_log_density,
    tilt_from_density_ratio,
    tilted_claim_law,
    validate_tilt,
)

__version__ = "0.1.0"
