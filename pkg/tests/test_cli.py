import json

import pytest

from jmgt.cli import main


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    return main([*argv, "-o", str(out)]), out


def test_validate_kernel_ok_and_failure(tmp_path, capsys):
    code, out = run(tmp_path, "validate-kernel")
    assert code == 0
    doc = json.loads((out / "kernel_report.json").read_text())
    assert doc["schema_version"] == "1.0" and "generated" in doc
    text = capsys.readouterr().out
    assert text.startswith("--- jmgt validate-kernel ---") and text.rstrip().endswith("--- end ---")
    code, _ = run(tmp_path, "validate-kernel", "--set", "kernel.m=2.0", sub="bad")
    assert code == 2


def test_symbol_reproducible_and_figures(tmp_path):
    args = ("symbol", "--reproducible", "--set", "analysis.rho_grid.count=12")
    c1, o1 = run(tmp_path, *args, sub="a")
    c2, o2 = run(tmp_path, *args, "--figures", sub="b")
    assert c1 == c2 == 0
    assert (o1 / "abscissa.csv").read_bytes() == (o2 / "abscissa.csv").read_bytes()
    assert not (o1 / "abscissa.png").exists()
    assert (o2 / "abscissa.png").stat().st_size > 0
    assert "generated" not in json.loads((o1 / "symbol.json").read_text())


def test_simulate_writes_series(tmp_path):
    code, out = run(tmp_path, "simulate", "--set", "grid.N=32", "--set", "solver.t_end=0.5",
                    "--set", "solver.snapshot_stride=5", "--figures")
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# generated") and len(lines) > 3
    assert list(out.glob("*.png"))


def test_simulate_blowup_exit(tmp_path):
    code, _ = run(tmp_path, "simulate", "--set", "medium.k=1.0", "--set", "solver.scheme=ETD2",
                  "--set", "grid.n=2", "--set", "grid.N=32", "--set", "grid.L=20.0",
                  "--set", "analysis.initial_data.scale=20.0", "--set", "solver.t_end=20.0",
                  "--set", "solver.dt=0.05")
    assert code == 3


def test_decay_pass_and_window_miss(tmp_path):
    code, out = run(tmp_path, "decay", "--reproducible")
    assert code == 0
    doc = json.loads((out / "decay.json").read_text())
    assert doc["pass"]
    code, _ = run(tmp_path, "decay", "--set", "analysis.fit_window=[0.1, 1.0]", sub="miss")
    assert code == 5


@pytest.mark.parametrize("argv", [
    ["simulate", "--set", "medium.k=1.0"],
    ["simulate", "--set", "nonsense"],
    ["simulate", "--config", "/nonexistent.yaml"],
    ["no-such-command"],
    ["verify", "--set", "analysis.verify.representation=reduced"],
])
def test_configuration_errors_exit_64(tmp_path, argv):
    assert main([*argv, "-o", str(tmp_path)]) == 64


def test_verify_and_fault(tmp_path):
    quick = ["--set", "analysis.verify.appendix=false", "--set", "analysis.verify.quick=true"]
    code, out = run(tmp_path, "verify", *quick)
    assert code == 0
    assert json.loads((out / "verify.json").read_text())["pass"]
    code, _ = run(tmp_path, "verify", *quick, "--fault", "f3_sign", sub="fault")
    assert code == 4


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("JMGT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["validate-kernel"]) == 0
    assert (tmp_path / "env" / "kernel_report.json").exists()
