import io
import json
import math
import subprocess
import sys

import pytest

from drs import cli
from drs.spherical import NumericalFailure


def run(argv, tmp_path):
    out = io.StringIO()
    code = cli.main(argv + ["--out", str(tmp_path)], stream=out)
    return code, out.getvalue()


def body(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_phi_single_point(tmp_path):
    code, text = run(["phi", "--space", "h3", "--lambda", "2", "--s", "1"], tmp_path)
    assert code == 0
    assert text == "0.38686883222367\n"


def test_phi_table_lists_every_method(tmp_path):
    code, _ = run(["phi", "--space", "dr:2,1", "--lambda", "1,30", "--s", "0.5,2"], tmp_path)
    assert code == 0
    lines = (tmp_path / "phi.csv").read_text().splitlines()
    assert lines[0] == "# drs phi" and lines[1].startswith("# config_hash: ")
    rows = body("\n".join(lines))
    assert rows[0].startswith("lambda,s,value,error_bound,method,ode")
    assert len(rows) == 5


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "drs", "phi", "--space", "h3", "--lambda", "2",
                          "--s", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "0.38686883222367\n"


def test_calibration_record(tmp_path):
    code, _ = run(["check", "calibration", "--space", "dr:2,1"], tmp_path)
    assert code == 0
    (path,) = tmp_path.glob("calibration_*.json")
    rec = json.loads(path.read_text())
    assert rec["space"] == "dr:2,1"
    assert {"kappa", "C_E", "C_E_prime", "r_switch", "oracle_ceiling"} <= set(rec)
    assert rec["C_cal"] == pytest.approx(1 / math.pi, rel=1e-12)


@pytest.mark.parametrize("argv", [
    ["phi", "--space", "dr:1,1", "--lambda", "1", "--s", "1"],
    ["phi", "--space", "h3", "--lambda", "1", "--s", "-1"],
    ["phi", "--space", "h3", "--s", "1"],
    ["transform", "--space", "h3", "--profile", "triangle:1,2"],
    ["sweep", "--family", "case3", "--q", "2", "--alpha", "0.5", "--n-list", "8..64"],
    ["sweep", "--family", "case2", "--q", "2", "--alpha", "0.5", "--n-list", "8..32"],
    ["sweep", "--family", "case2", "--q", "0.5", "--alpha", "0.5", "--n-list", "8..64"],
    ["maximal", "--space", "h3", "--profile", "gauss:2,0.5", "--radial-nodes", "0"],
    ["check", "h3-global", "--space", "dr:2,1"],
], ids=["bad-space", "bad-radius", "missing-lambda", "bad-profile", "bad-family",
        "short-n-list", "bad-q", "bad-nodes", "h3-only"])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    code, _ = run(argv, tmp_path)
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = {"space": "dr:2,1", "grids": {"radial_nodes": 256, "s_max": 6.0},
           "experiment": {"profile": "gauss:2,0.5"}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    args = cli.make_parser().parse_args(["transform", "--config", str(path), "--s-max", "9"])
    merged = cli.build_config(args)
    assert merged["space"] == "dr:2,1"
    assert merged["grids"]["radial_nodes"] == 256
    assert merged["grids"]["s_max"] == 9.0
    assert merged["grids"]["time"]["n_log"] == 64
    assert merged["experiment"]["profile"] == "gauss:2,0.5"


def test_config_hash_ignores_output_and_workers():
    a = cli.build_config(cli.make_parser().parse_args(["phi", "--lambda", "1", "--s", "1"]))
    b = dict(a, output="elsewhere", workers=7)
    c = dict(a, seed=1)
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(c)


def test_worker_env_overrides(monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "3")
    cfg = cli.build_config(cli.make_parser().parse_args(["phi", "--workers", "5"]))
    assert cfg["workers"] == 3
    monkeypatch.setenv("DRS_WORKERS", "many")
    with pytest.raises(cli.ConfigError):
        cli.build_config(cli.make_parser().parse_args(["phi"]))


def test_parse_n_list():
    assert cli.parse_n_list("8..1024") == [8, 16, 32, 64, 128, 256, 512, 1024]
    assert cli.parse_n_list("8,12,20") == [8, 12, 20]
    with pytest.raises(cli.ConfigError):
        cli.parse_n_list("64..8")
    with pytest.raises(cli.ConfigError):
        cli.parse_n_list("a,b")


def test_transform_report(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")
    code, text = run(["transform", "--space", "dr:2,1", "--profile", "gauss:2,0.5",
                      "--radial-nodes", "1024", "--s-max", "14"], tmp_path)
    assert code == 0
    res = json.loads(text)
    assert res["round_trip_error"] < 1e-6 and res["plancherel_error"] < 1e-6
    assert (tmp_path / "radial.csv").exists() and (tmp_path / "spectral.csv").exists()
    saved = json.loads((tmp_path / "transform.json").read_text())
    assert saved["command"] == "transform" and saved["config"]["space"] == "dr:2,1"


def test_sweep_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")
    code, text = run(["sweep", "--space", "h3", "--family", "case2", "--q", "3,8",
                      "--alpha", "0.5", "--n-list", "8..64"], tmp_path)
    assert code == 0
    assert "q=8 alpha=0.5" in text and "admissible" in text
    csv = (tmp_path / "sweep_case2_q8_a0.5.csv").read_text()
    assert body(csv)[0] == "N,lq_norm,sobolev_norm,ratio"
    assert len(body(csv)) == 5
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert [r["q"] for r in summary["result"]["reports"]] == [3.0, 8.0]
    assert {r["clause"] for r in summary["result"]["theorem"]} == {"i", "ii", "iii", "iv"}


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")

    def boom(*a, **k):
        raise NumericalFailure("quadrature not converged")

    monkeypatch.setattr("drs.transforms.inverse_sft", boom)
    code, _ = run(["transform", "--space", "h3", "--profile", "gauss:2,0.5",
                   "--radial-nodes", "128"], tmp_path)
    assert code == 3
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["result"]["error"] == "NumericalFailure"


def test_unconverged_propagate_exit_3(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")
    code, _ = run(["propagate", "--space", "h3", "--profile", "gauss:2,0.5", "--t", "0.5",
                   "--radial-nodes", "64", "--tol", "1e-300"], tmp_path)
    assert code == 3


def test_inconclusive_exit_4(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")
    from drs import experiments

    real = experiments.sweep

    def noisy(*a, **k):
        reps = real(*a, **k)
        for r in reps:
            r.slope_stderr = 1.0
            r.verdict = r.judge()
        return reps

    monkeypatch.setattr(experiments, "sweep", noisy)
    code, _ = run(["sweep", "--space", "h3", "--family", "case2", "--q", "2",
                   "--alpha", "0.5", "--n-list", "8..64"], tmp_path)
    assert code == 4


def test_maximal_csv_header(tmp_path, monkeypatch):
    monkeypatch.setenv("DRS_WORKERS", "2")
    code, _ = run(["maximal", "--space", "dr:2,1", "--profile", "case2:8", "--radial-nodes", "32",
                   "--s-max", "0.05", "--n-log", "16", "--n-uniform", "33"], tmp_path)
    assert code == 0
    text = (tmp_path / "maximal.csv").read_text()
    head = [line for line in text.splitlines() if line.startswith("#")]
    assert head[0] == "# drs maximal" and head[2].startswith("# created: ")
    assert body(text)[0] == "s,sup_value,argmax_t,error_estimate"
