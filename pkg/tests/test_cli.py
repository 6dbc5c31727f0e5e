import json

import numpy as np
import pytest

from entot import cli
from entot.measures import Grid1D, GridMeasure, write_measure_csv


@pytest.fixture
def marginal_files(tmp_path):
    g = Grid1D(0.0, 1.0, 48)
    x = g.centers
    mu = GridMeasure(g, 1.0 + 0.4 * np.sin(2 * np.pi * x), renormalize=True)
    nu = GridMeasure(g, 1.0 + 0.4 * np.cos(2 * np.pi * x), renormalize=True)
    mu_path = tmp_path / "mu.csv"
    nu_path = tmp_path / "nu.csv"
    write_measure_csv(mu_path, mu)
    write_measure_csv(nu_path, nu)
    return str(mu_path), str(nu_path)


def run(args):
    return cli.main(args)


def test_parse_config_precedence_and_provenance(tmp_path, marginal_files):
    mu, nu = marginal_files
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"gamma": 0.5, "tol": 1e-8, "mu": mu, "nu": nu}))
    cfg, violations = cli.parse_config(
        ["solve", "--config", str(cfg_path), "--gamma", "0.25"]
    )
    assert violations == []
    assert cfg.options["gamma"] == 0.25
    assert cfg.provenance["gamma"] == "flag"
    assert cfg.options["tol"] == 1e-8
    assert cfg.provenance["tol"] == "config"
    assert cfg.provenance["mode"] == "default"


def test_parse_config_lists_every_violation():
    _, violations = cli.parse_config(["solve", "--gamma", "-2", "--tol", "0"])
    messages = [m for _, m in violations]
    assert any("--mu" in m for m in messages)
    assert any("--nu" in m for m in messages)
    assert any("--gamma" in m for m in messages)
    assert any("--tol" in m for m in messages)


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        run(["frobnicate"])
    assert err.value.code == 2


def test_parameter_error_exit_code(marginal_files):
    mu, nu = marginal_files
    assert run(["solve", "--mu", mu, "--nu", nu, "--gamma", "-1"]) == 3


def test_missing_file_exit_code(tmp_path):
    missing = str(tmp_path / "absent.csv")
    assert run(["solve", "--mu", missing, "--nu", missing, "--gamma", "1"]) == 4
    assert run(["solve", "--config", str(tmp_path / "no.json")]) == 4


def test_solve_writes_report_with_fixed_keys(tmp_path, marginal_files):
    mu, nu = marginal_files
    out = tmp_path / "report.json"
    code = run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.2", "--out", str(out), "--quiet"]
    )
    assert code == 0
    report = json.loads(out.read_text())
    for key in (
        "iterations",
        "residuals",
        "primal",
        "dual",
        "gap",
        "optimality_residual",
        "gauge_constant",
    ):
        assert key in report
    assert report["converged"] is True
    assert report["provenance"]["gamma"] == "flag"


def test_solve_rerun_is_byte_identical(tmp_path, marginal_files):
    mu, nu = marginal_files
    out = tmp_path / "report.json"
    args = ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.3", "--out", str(out), "--quiet"]
    assert run(args) == 0
    first = out.read_bytes()
    assert run(args) == 0
    assert out.read_bytes() == first


def test_solve_nonconvergence_exit_code_and_report(tmp_path, marginal_files):
    mu, nu = marginal_files
    out = tmp_path / "report.json"
    code = run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.05", "--max-iter", "2",
         "--out", str(out), "--quiet"]
    )
    assert code == 5
    assert json.loads(out.read_text())["converged"] is False


def test_outputs_all_or_none_on_write_failure(tmp_path, marginal_files):
    mu, nu = marginal_files
    plan = tmp_path / "plan.csv"
    code = run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.2",
         "--out", str(tmp_path / "nodir" / "report.json"),
         "--plan", str(plan), "--quiet"]
    )
    assert code == 6
    assert not plan.exists()
    assert list(tmp_path.glob(".entot-*")) == []


def test_out_dir_prefixes_relative_paths(tmp_path, marginal_files, monkeypatch):
    mu, nu = marginal_files
    monkeypatch.chdir(tmp_path)
    code = run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.2",
         "--out", "report.json", "--out-dir", str(tmp_path / "results"), "--quiet"]
    )
    # out-dir must already exist: staging fails inside a missing directory
    assert code == 6
    (tmp_path / "results").mkdir()
    code = run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.2",
         "--out", "report.json", "--out-dir", str(tmp_path / "results"), "--quiet"]
    )
    assert code == 0
    assert (tmp_path / "results" / "report.json").exists()


def test_solve_then_check_optimality_roundtrip(tmp_path, marginal_files):
    mu, nu = marginal_files
    report = tmp_path / "report.json"
    plan = tmp_path / "plan.csv"
    assert run(
        ["solve", "--mu", mu, "--nu", nu, "--gamma", "0.2",
         "--out", str(report), "--plan", str(plan), "--quiet"]
    ) == 0
    out = tmp_path / "check.json"
    code = run(
        ["check-optimality", "--mu", mu, "--nu", nu, "--gamma", "0.2",
         "--plan", str(plan), "--tol", "1e-6", "--out", str(out), "--quiet"]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["within_tol"] is True
    assert max(payload["r1"], payload["r2"]) <= 1e-6


def test_sweep_gamma_csv(tmp_path, marginal_files):
    mu, nu = marginal_files
    out = tmp_path / "sweep.csv"
    code = run(
        ["sweep-gamma", "--mu", mu, "--nu", nu, "--gammas", "1,0.5",
         "--out", str(out), "--quiet"]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "gamma,iterations,primal,dual,gap,r1,r2,status"
    assert len(lines) == 3
    assert all(line.endswith("ok") for line in lines[1:])


def test_gamma_limit_csv_and_schedule_parsing(tmp_path):
    out = tmp_path / "gl.csv"
    code = run(
        ["gamma-limit", "--mu", "atoms:0:1", "--nu", "atoms:1:1",
         "--schedule", "coupled:c=1:gammas=0.2,0.1", "--n", "128",
         "--out", str(out), "--quiet"]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == (
        "gamma,delta,regularized_value,reference,gap_to_reference,"
        "entropy_mu_delta,entropy_nu_delta,status"
    )
    assert len(lines) == 3
    row = lines[1].split(",")
    assert float(row[0]) == 0.2 and float(row[1]) == 0.2
    assert float(row[3]) == 1.0


def test_gamma_limit_pairs_and_power_schedules():
    assert cli._parse_schedule("pairs:0.2:0.1,0.1:0.05") == [(0.2, 0.1), (0.1, 0.05)]
    got = cli._parse_schedule("power:coeff=0.01:exp=2:gammas=0.1")
    assert got[0][0] == 0.1
    assert got[0][1] == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        cli._parse_schedule("geometric:0.5")


def test_atoms_parsing_errors():
    with pytest.raises(ValueError):
        cli._parse_atoms("0.5:1.0")
    with pytest.raises(ValueError):
        cli._parse_atoms("atoms:0.5")
    parsed = cli._parse_atoms("atoms:0.25:0.5,0.75:0.5")
    assert parsed.locations.tolist() == [0.25, 0.75]


def test_orlicz_norm_and_entropy_commands(tmp_path, marginal_files, capsys):
    mu, _ = marginal_files
    assert run(["orlicz-norm", "--young", "exp", "--input", mu]) == 0
    norm_line = capsys.readouterr().out.strip()
    assert float(norm_line) > 0
    out = tmp_path / "e.json"
    assert run(["entropy", "--input", mu, "--out", str(out)]) == 0
    printed = float(capsys.readouterr().out.strip())
    assert json.loads(out.read_text())["value"] == pytest.approx(printed)


def test_config_bad_json_is_parameter_error(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    assert run(["solve", "--config", str(bad)]) == 3
