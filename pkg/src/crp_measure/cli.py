"""Command-line scenario runner.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path as FsPath

import numpy as np

from . import distributions as dist
from . import montecarlo as mc
from .montecarlo import CheckRow
from .process import sample_paths, write_paths_csv
from .renewal import lst_relation_check, poisson_linearity_report, renewal_mean
from .scenarios import BUILTIN, ConfigError, Scenario, find_scenarios, resolve
from .tilt import UnsupportedTiltError, tilt_from_density_ratio, tilted_claim_law, validate_tilt

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
KS_ALPHA = 0.01
ROUNDTRIP_TOL = 1e-10
ENV_CONFIG_DIR = "CRP_SCENARIO_DIR"


def roundtrip_deviation(source_claim, tilt, n_points: int = 100) -> float:
    """Largest relative gap between ``w`` and the weight rebuilt from the tilted law."""
    rebuilt = tilt_from_density_ratio(source_claim, tilted_claim_law(source_claim, tilt))
    lo, hi = dist.quantile(source_claim, [1e-3, 1.0 - 1e-3])
    x = np.linspace(lo, hi, n_points)
    w0, w1 = tilt.weight(x), rebuilt.weight(x)
    return float(np.max(np.abs(w0 - w1) / np.maximum(1.0, np.abs(w0))))


def run_scenario(sc: Scenario, tol: float = 1e-10) -> list[CheckRow]:
    """Execute the full check suite of one scenario."""
    rows: list[CheckRow] = []
    name, seed, n = sc.name, sc.seed, sc.n_paths

    def add(check, statistic, value, *, se=math.nan, z=math.nan, passed=True, mc_run=False):
        rows.append(CheckRow(name, check, statistic, value, se, z, bool(passed), seed if mc_run else None, n if mc_run else None))

    source, density = sc.source, sc.density()
    try:
        target = sc.target_spec()
    except UnsupportedTiltError as exc:
        target = None
        add("target_law", f"unavailable: {exc}", math.nan)

    report = validate_tilt(sc.tilt, source.claim, moment_order=2, tol=tol)
    add("validate_tilt", "unit_mass", report.unit_mass, passed=report.passed)
    for order, value in report.moments.items():
        add("validate_tilt", f"moment_{order}", value, passed=report.converged)
    if target is not None:
        rt = roundtrip_deviation(source.claim, sc.tilt)
        add("roundtrip", "max_rel_dev", rt, passed=rt <= ROUNDTRIP_TOL)

    for t in sc.t_grid:
        res = mc.is_expectation(mc.constant(1.0), source, density, t, n, seed, horizon=sc.horizon)
        z = res.z(1.0)
        add("unit_mass", f"E_P[M_t] t={t:g}", res.estimate, se=res.std_error, z=z, passed=abs(z) <= mc.Z_LIMIT, mc_run=True)

    s0, t1 = sc.t_grid[0], sc.t_grid[-1]
    if s0 < t1:
        mart = mc.martingale_check(source, density, s0, t1, n, seed, horizon=sc.horizon)
        for ev in mart.events:
            add(
                "martingale",
                f"{ev.name} s={s0:g} t={t1:g}" + (" (skipped)" if ev.skipped else ""),
                ev.difference,
                se=ev.std_error,
                z=ev.z,
                passed=ev.skipped or abs(ev.z) <= mc.Z_LIMIT,
                mc_run=True,
            )

    if target is not None:
        rng = np.random.default_rng(seed)
        x = dist.sample(source.claim, rng, size=n)
        ks = mc.weighted_ks(x, lambda v: dist.cdf(target.claim, v), weights=sc.tilt.weight(x))
        add("weighted_ks", f"p_value vs {target.claim}", ks.p_value, passed=ks.p_value > KS_ALPHA, mc_run=True)

        res = mc.is_expectation(mc.observed_first_claim, source, density, t1, n, seed, horizon=sc.horizon, given=mc.has_claim)
        z = res.z(dist.mean(target.claim))
        add("first_claim", "E_Q[X_1]", res.estimate, se=res.std_error, z=z, passed=abs(z) <= mc.Z_LIMIT, mc_run=True)

        # smallest grid time: IS weights have the lightest tail there
        for label, phi in (("N_t", mc.count), ("S_t", mc.aggregate)):
            a = mc.is_expectation(phi, source, density, s0, n, seed, horizon=sc.horizon)
            b = mc.direct_expectation(phi, target, s0, n, seed + 1, horizon=sc.horizon)
            z = mc.agreement_z(a, b)
            add("is_vs_direct", f"{label} t={s0:g}", a.estimate - b.estimate, se=math.hypot(a.std_error, b.std_error), z=z, passed=abs(z) <= mc.Z_LIMIT, mc_run=True)

    p_src = mc.premium_density(source)
    add("premium", "p(P)", p_src)
    cpp_beta = sc.cpp_beta()
    v_rate = mc.pemm_rate(source, cpp_beta)
    if target is not None:
        p_tgt = mc.premium_density(target)
        add("premium", "p(Q)", p_tgt)
        if sc.expect_loading:
            add("premium", "loading p(Q)-p(P)", p_tgt - p_src, passed=p_tgt > p_src)
        cpp = sc.cpp_spec()
        p_cpp = mc.premium_density(cpp)
        add("premium", "V rate - p(CPP)", v_rate - p_cpp, passed=abs(v_rate - p_cpp) <= 1e-8 * p_cpp)
    else:
        add("premium", "V rate", v_rate)
    if target is not None and s0 < t1:
        sm = mc.surplus_martingale_check(cpp, s0, t1, n, seed, horizon=sc.horizon)
        worst = max((abs(e.z) for e in sm.events if not e.skipped), default=0.0)
        add("surplus_martingale", f"max|z| under CPP s={s0:g} t={t1:g}", worst, passed=sm.passed, mc_run=True)

    lin = poisson_linearity_report(source.interarrival, sc.t_grid)
    add("renewal", "max_rel_dev E[N_t] vs t/E[W]", lin.max_rel_dev, passed=lin.is_linear == source.is_poisson)
    lst = lst_relation_check(source.interarrival, [0.5, 1.0, 2.0, 5.0])
    limit = 1e-12 if lst.method == "exponential" else 1e-5
    add("renewal", f"lst {lst.method} max_abs_dev", lst.max_abs_dev, passed=lst.max_abs_dev <= limit)
    return rows


def _open_out(out: str | None, default_name: str):
    if out is None:
        return None
    path = FsPath(out)
    if path.is_dir():
        path = path / default_name
    return path


def _emit(text: str, out: str | None, default_name: str) -> None:
    path = _open_out(out, default_name)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def _config_dir(args) -> str | None:
    return args.config_dir or os.environ.get(ENV_CONFIG_DIR)


def _scenario(args) -> Scenario:
    sc = resolve(args.scenario, _config_dir(args))
    if getattr(args, "n_paths", None) is not None and args.n_paths < 1000:
        raise ConfigError("--n-paths must be >= 1000")
    if getattr(args, "horizon", None) is not None and not args.horizon > 0.0:
        raise ConfigError("--horizon must be positive")
    return sc.with_overrides(seed=getattr(args, "seed", None), n_paths=getattr(args, "n_paths", None), horizon=getattr(args, "horizon", None))


def cmd_list(args) -> int:
    rows = []
    for key, entry in find_scenarios(_config_dir(args)).items():
        if isinstance(entry, Scenario):
            rows.append([key, "builtin" if key in BUILTIN else "config", entry.description])
        else:
            rows.append([key, "config", str(entry)])
    _emit(_csv(["scenario", "origin", "description"], rows), args.out, "scenarios.csv")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _scenario(args)
    rows = run_scenario(sc, tol=args.tol)
    _emit(mc.write_check_csv(rows), args.out, f"{sc.name}.csv")
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.check}: {r.statistic} = {r.value:.6g}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    spec = sc.source if args.measure == "source" else sc.target_spec()
    batch = sample_paths(spec, sc.horizon, args.count, sc.seed)
    text = f"# scenario={sc.name} measure={args.measure} seed={sc.seed} horizon={sc.horizon:g}\n"
    text += write_paths_csv(batch)
    _emit(text, args.out, f"{sc.name}-paths.csv")
    return EXIT_OK


def cmd_convert(args) -> int:
    sc = _scenario(args)
    beta = sc.cpp_beta()
    cpp = sc.cpp_spec()
    mean_w = dist.mean(sc.source.interarrival)
    header = ["scenario", "source_interarrival", "source_claim", "mean_interarrival", "rho", "alpha", "alpha_check", "q_interarrival", "q_claim", "seed"]
    row = [
        sc.name,
        str(sc.source.interarrival),
        str(sc.source.claim),
        _fmt(mean_w),
        _fmt(beta.implied_rate),
        _fmt(beta.alpha),
        _fmt(math.log(beta.implied_rate) + math.log(mean_w)),
        str(cpp.interarrival),
        str(cpp.claim),
        sc.seed,
    ]
    _emit(_csv(header, [row]), args.out, f"{sc.name}-convert.csv")
    return EXIT_OK


def cmd_premium(args) -> int:
    sc = _scenario(args)
    p_src = mc.premium_density(sc.source)
    q = sc.cpp_spec()
    p_q = mc.premium_density(q)
    header = ["scenario", "p_P", "p_Q", "loading", "relative_loading", "q_spec", "seed"]
    row = [sc.name, _fmt(p_src), _fmt(p_q), _fmt(p_q - p_src), _fmt(p_q / p_src - 1.0), str(q), sc.seed]
    _emit(_csv(header, [row]), args.out, f"{sc.name}-premium.csv")
    return EXIT_OK


def cmd_renewal(args) -> int:
    try:
        law = dist.ParamDistribution(args.family, rate=args.rate, shape=args.shape, scale=args.scale)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    ts = args.t or [1.0]
    if any(t < 0.0 for t in ts):
        raise ConfigError("--t values must be >= 0")
    mean_w = dist.mean(law)
    values = renewal_mean(law, np.asarray(ts, dtype=float), args.tail_tol)
    rows = []
    for t, m in zip(ts, values):
        linear = t / mean_w
        rel = abs(m - linear) / linear if t > 0 else 0.0
        rows.append([str(law), _fmt(float(t)), _fmt(float(m)), _fmt(linear), _fmt(rel)])
    _emit(_csv(["law", "t", "renewal_mean", "linear", "rel_dev"], rows), args.out, "renewal.csv")
    return EXIT_OK


_FAMILIES = {"exp": "exponential", "exponential": "exponential", "ga": "gamma", "gamma": "gamma", "weibull": "weibull", "wei": "weibull"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crp-measure", description="Compound renewal change-of-measure checks.")
    parser.add_argument("--config-dir", help=f"directory of *.toml scenarios (default ${ENV_CONFIG_DIR})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *, mc_flags=True):
        p.add_argument("scenario", help="built-in name, config name or path to a .toml file")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--out", help="output file or directory (default stdout)")
        if mc_flags:
            p.add_argument("--n-paths", type=int)

    p = sub.add_parser("list", help="list scenarios")
    p.add_argument("--out")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("run", help="run the check suite of a scenario")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10, help="tilt normalisation tolerance")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="dump simulated paths as CSV")
    common(p, mc_flags=False)
    p.add_argument("--count", type=int, default=10, help="number of paths")
    p.add_argument("--measure", choices=("source", "target"), default="source")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convert", help="print the compound Poisson conversion")
    common(p, mc_flags=False)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("premium", help="print premium densities and loading")
    common(p, mc_flags=False)
    p.set_defaults(func=cmd_premium)

    p = sub.add_parser("renewal", help="print E[N_t] for an interarrival law")
    p.add_argument("--family", required=True, type=lambda s: _FAMILIES.get(s.lower(), s))
    p.add_argument("--rate", type=float)
    p.add_argument("--shape", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--t", type=float, action="append")
    p.add_argument("--tail-tol", type=float, default=1e-12)
    p.add_argument("--out")
    p.set_defaults(func=cmd_renewal)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "count", 1) < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "tol", 1.0) <= 0.0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UnsupportedTiltError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except mc.MonteCarloError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
