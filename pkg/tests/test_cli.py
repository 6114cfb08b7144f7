import csv
import io
import textwrap

import pytest

from crp_measure import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    names = [r["scenario"] for r in rows(out)]
    assert names[:6] == list(cli.BUILTIN)


def test_renewal_value(capsys):
    code, out, _ = run(capsys, "renewal", "--family", "ga", "--rate", "2", "--shape", "2", "--t", "0.5")
    assert code == 0
    (r,) = rows(out)
    assert r["renewal_mean"].startswith("0.28383")
    assert float(r["rel_dev"]) > 0.4


def test_renewal_bad_law(capsys):
    code, _, err = run(capsys, "renewal", "--family", "ga", "--rate", "-2", "--shape", "2")
    assert code == 2 and "error" in err


def test_convert_example_3_1(capsys):
    code, out, _ = run(capsys, "convert", "example-3.1")
    (r,) = rows(out)
    assert code == 0
    assert float(r["alpha"]) == 0.0 and float(r["rho"]) == 1.0
    assert r["q_claim"] == "Exp(1.5)"


def test_premium_loading(capsys):
    code, out, _ = run(capsys, "premium", "example-4.3")
    (r,) = rows(out)
    assert code == 0
    assert float(r["p_Q"]) > float(r["p_P"])
    assert float(r["p_Q"]) == pytest.approx(1.0)


def test_simulate_is_deterministic(capsys, tmp_path):
    code, out1, _ = run(capsys, "simulate", "example-4.2", "--count", "3", "--seed", "9")
    _, out2, _ = run(capsys, "simulate", "example-4.2", "--count", "3", "--seed", "9")
    _, out3, _ = run(capsys, "simulate", "example-4.2", "--count", "3", "--seed", "10")
    assert code == 0 and out1 == out2 != out3
    assert out1.startswith("# scenario=example-4.2 measure=source seed=9")
    code, _, _ = run(capsys, "simulate", "example-4.2", "--count", "3", "--out", str(tmp_path))
    assert (tmp_path / "example-4.2-paths.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ("run", "example-4.2", "--n-paths", "0"),
        ("run", "no-such-scenario"),
        ("run", "example-4.2", "--horizon", "-1"),
        ("run", "example-4.2", "--tol", "0"),
        ("simulate", "example-4.2", "--count", "0"),
        ("frobnicate",),
        ("run", "example-4.2", "--seed", "abc"),
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as info:
        raise SystemExit(cli.main(list(argv)))
    assert info.value.code == 2


@pytest.mark.parametrize("name", ["example-4.3", "example-3.1"])
def test_run_passes_and_is_deterministic(capsys, name):
    code, out, err = run(capsys, "run", name, "--seed", "42")
    assert code == 0, err
    table = rows(out)
    assert {r["check"] for r in table} >= {"validate_tilt", "unit_mass", "martingale", "weighted_ks", "premium", "renewal"}
    assert all(r["pass"] == "true" for r in table)
    assert {r["seed"] for r in table if r["n_paths"]} == {"42"}
    _, again, _ = run(capsys, "run", name, "--seed", "42")
    assert again == out


def test_run_esscher_mean_row(capsys):
    _, out, _ = run(capsys, "run", "example-4.3", "--seed", "42")
    (fc,) = [r for r in rows(out) if r["check"] == "first_claim"]
    assert abs(float(fc["value"]) - 1.0) <= 3 * float(fc["std_error"])
    (ks,) = [r for r in rows(out) if r["check"] == "weighted_ks"]
    assert "Ga(2,2)" in ks["statistic"]


def test_run_reports_failure_exit_1(capsys, tmp_path):
    cfg = tmp_path / "unnormalised.toml"
    cfg.write_text(
        textwrap.dedent(
            """
            horizon = 2.0
            t_grid = [1.0, 2.0]
            n_paths = 5000
            [source.interarrival]
            family = "exp"
            rate = 1.0
            [source.claim]
            family = "exp"
            rate = 1.0
            [tilt]
            kind = "log-linear"
            const = 0.2
            log_coef = 0.0
            lin_coef = 0.0
            """
        )
    )
    code, out, err = run(capsys, "run", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "FAIL validate_tilt" in err
    written = rows((tmp_path / "unnormalised.csv").read_text())
    assert any(r["check"] == "validate_tilt" and r["pass"] == "false" for r in written)


def test_run_custom_tilt_without_closed_form(capsys, tmp_path):
    cfg = tmp_path / "table.toml"
    cfg.write_text(
        textwrap.dedent(
            """
            horizon = 2.0
            t_grid = [1.0, 2.0]
            n_paths = 5000
            [source.interarrival]
            family = "exp"
            rate = 1.0
            [source.claim]
            family = "exp"
            rate = 1.0
            [tilt]
            kind = "table"
            x = [0.0, 1000.0]
            gamma = [0.0, 0.0]
            """
        )
    )
    code, out, err = run(capsys, "--config-dir", str(tmp_path), "run", "table")
    assert code == 0, err
    assert any(r["check"] == "target_law" for r in rows(out))
    code, _, err = run(capsys, "--config-dir", str(tmp_path), "convert", "table")
    assert code == 2
