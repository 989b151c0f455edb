"""Command-line tests, driven in process through main(argv).

The exit codes are part of the contract: 0 success or proof, 2 budget
exhausted, 3 counterexample, 1 any error (argparse usage errors exit 2 via
SystemExit, as argparse always does)."""

import json
import math
import shutil
import subprocess

import pytest

from lgml.cli import main
from lgml.model import Dataset, MlpConfig, train

FAST_SETS = ["--set", "max_epochs=2000", "--set", "restarts=2",
             "--set", "patience=1000", "--set", "test_count=200"]


def run_cli(*argv):
    return main(list(argv))


def checkpoint(tmp_path, activation="tanh"):
    """A small trained model saved to disk, for verify/emit-smt."""
    data = Dataset.from_points(
        ("x",), [({"x": -1.0}, math.sin(-1.0)), ({"x": 0.0}, 0.0),
                 ({"x": 1.0}, math.sin(1.0))])
    config = MlpConfig(input_dim=1, activation=activation, max_epochs=2000,
                       restarts=2, patience=1000)
    fit = train(config, data)
    path = tmp_path / f"{activation}.json"
    fit.model.save(path)
    return str(path)


# -- run ------------------------------------------------------------------------

def test_run_proved_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("run", "--experiment", "sine", "--output", str(out),
                   "--set", "rho=10", *FAST_SETS)
    assert code == 0
    assert {"trace.csv", "report.json", "model.json", "curves.csv"} <= \
        {p.name for p in out.iterdir()}
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "Proved"
    assert "Proved" in capsys.readouterr().err
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == ("index,dataset_size,train_max_residual,underfit,"
                      "eps_star,cex_x,test_rmse,elapsed")


def test_run_budget_exhausted_exits_2(tmp_path):
    out = tmp_path / "out"
    code = run_cli("run", "--experiment", "sine", "--output", str(out),
                   "--set", "rho=1e-9", "--set", "max_iterations=1",
                   *FAST_SETS)
    assert code == 2
    assert (out / "report.json").exists()


def test_run_two_feature_domain_skips_curves(tmp_path):
    out = tmp_path / "out"
    code = run_cli("run", "--experiment", "pythagoras", "--output", str(out),
                   "--set", "rho=1e9", *FAST_SETS)
    assert code == 0
    assert not (out / "curves.csv").exists()


def test_run_from_config_file_with_flag_override(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "experiment": "sine", "rho": 1e-9, "max_iterations": 1,
        "max_epochs": 2000, "restarts": 2, "patience": 1000,
        "test_count": 200, "domain": {"x": [-1.0, 1.0]}}))
    out = tmp_path / "out"
    # The command line wins over the file, turning the run into a proof.
    code = run_cli("run", "--config", str(config), "--output", str(out),
                   "--set", "rho=10")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["settings"]["rho"] == 10
    assert report["settings"]["domain"] == {"x": [-1.0, 1.0]}


def test_run_reproducible_from_saved_report(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    assert run_cli("run", "--experiment", "sine", "--output", str(first),
                   "--set", "rho=10", *FAST_SETS) == 0
    assert run_cli("run", "--config", str(first / "report.json"),
                   "--output", str(again)) == 0
    one = json.loads((first / "report.json").read_text())
    two = json.loads((again / "report.json").read_text())
    assert one["final_rmse"] == two["final_rmse"]
    assert one["settings"] == two["settings"]


@pytest.mark.parametrize("config_text", [
    "{not json",
    json.dumps(["a", "list"]),
    json.dumps({"experiment": "sine", "no_such_setting": 1}),
])
def test_run_malformed_config_writes_nothing(tmp_path, config_text, capsys):
    config = tmp_path / "config.json"
    config.write_text(config_text)
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(config), "--output", str(out)) == 1
    assert not out.exists()
    assert capsys.readouterr().err.startswith("lgml: ")


def test_run_needs_an_experiment(tmp_path):
    assert run_cli("run", "--output", str(tmp_path / "out")) == 1


def test_run_rejects_bad_set_syntax(tmp_path):
    assert run_cli("run", "--experiment", "sine",
                   "--output", str(tmp_path / "out"), "--set", "rho") == 1


def test_unknown_experiment_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        run_cli("run", "--experiment", "cosine",
                "--output", str(tmp_path / "out"))
    assert err.value.code == 2


# -- baseline --------------------------------------------------------------------

def test_baseline_writes_csv(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("baseline", "--sizes", "1,4", "--trials", "1",
                   "--output", str(out), *FAST_SETS)
    assert code == 0
    lines = (out / "baseline.csv").read_text().splitlines()
    assert lines[0] == "size,rmse"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "4"]
    assert "size 4" in capsys.readouterr().err


def test_baseline_rejects_bad_sizes(tmp_path):
    assert run_cli("baseline", "--sizes", "ten",
                   "--output", str(tmp_path / "out")) == 1


# -- verify ----------------------------------------------------------------------

def test_verify_proof(tmp_path, capsys):
    model = checkpoint(tmp_path)
    code = run_cli("verify", "--model", model, "--truth", "f(x) = sin(x)",
                   "--domain", "x=-1:1", "--rho", "10")
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "Proof"
    assert doc["certified_upper_bound"] <= 10


def test_verify_counterexample(tmp_path, capsys):
    model = checkpoint(tmp_path)
    code = run_cli("verify", "--model", model, "--truth", "f(x) = sin(x)",
                   "--domain", "x=-1:1", "--rho", "1e-12")
    assert code == 3
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "Counterexample"
    assert doc["eps_star"] > 1e-12
    assert -1.0 <= doc["strongest_point"]["x"] <= 1.0


def test_verify_smt_needs_a_solver(tmp_path, monkeypatch):
    monkeypatch.delenv("LGML_SOLVER", raising=False)
    model = checkpoint(tmp_path)
    assert run_cli("verify", "--model", model, "--truth", "f(x) = sin(x)",
                   "--domain", "x=-1:1", "--backend", "smt") == 1


def test_verify_rejects_bad_domain(tmp_path):
    model = checkpoint(tmp_path)
    assert run_cli("verify", "--model", model, "--truth", "f(x) = sin(x)",
                   "--domain", "x=1") == 1


def test_verify_missing_model_file(tmp_path):
    assert run_cli("verify", "--model", str(tmp_path / "nope.json"),
                   "--truth", "f(x) = sin(x)", "--domain", "x=-1:1") == 1


# -- emit-smt --------------------------------------------------------------------

def test_emit_smt_prints_query(tmp_path, capsys):
    model = checkpoint(tmp_path, activation="relu")
    code = run_cli("emit-smt", "--model", model, "--truth", "f(x) = x",
                   "--domain", "x=-1:1", "--eps", "0.5")
    assert code == 0
    script = capsys.readouterr().out
    assert "(set-logic QF_NRA)" in script
    assert "(declare-const x Real)" in script
    assert "(check-sat)" in script


def test_emit_smt_rejects_tanh(tmp_path, capsys):
    model = checkpoint(tmp_path, activation="tanh")
    code = run_cli("emit-smt", "--model", model, "--truth", "f(x) = x",
                   "--domain", "x=-1:1", "--eps", "0.5")
    assert code == 1
    assert capsys.readouterr().out == ""     # nothing on the data stream


def test_emit_smt_rejects_negative_eps_for_equality(tmp_path, capsys):
    model = checkpoint(tmp_path, activation="relu")
    code = run_cli("emit-smt", "--model", model, "--truth", "f(x) = x",
                   "--domain", "x=-1:1", "--eps", "-1")
    assert code == 1
    assert "meaningless" in capsys.readouterr().err


# -- wiring ----------------------------------------------------------------------

def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        run_cli()
    assert err.value.code == 2


def test_console_script_is_installed():
    exe = shutil.which("lgml")
    assert exe, "console script should be on PATH after an editable install"
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "emit-smt" in proc.stdout
