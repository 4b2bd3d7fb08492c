import json
import subprocess
import sys

import pytest

from qecf.builders import SchemeSpec, assemble_experiment
from qecf.circuit import Circuit
from qecf.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_layout(capsys):
    code, out, _ = run(capsys, "layout", "--kind", "reg", "--d", "3")
    assert code == 0
    js = json.loads(out)
    assert js["variant"] == "regular" and len(js["qubits"]) == 13


def test_build_roundtrip(capsys, tmp_path):
    path = tmp_path / "c.txt"
    code, _, _ = run(capsys, "build", "--scheme", "nonlocal", "--df", "5", "--out", str(path))
    assert code == 0
    parsed = Circuit.from_text(path.read_text())
    ref = assemble_experiment(SchemeSpec("nonlocal", 5)).circuit
    assert parsed.instructions == ref.instructions


def test_build_noisy_has_channels(capsys):
    code, out, _ = run(capsys, "build", "--scheme", "local", "--df", "5", "--noisy")
    assert code == 0 and "DEPOLARIZE2(0.005)" in out and "DEPOLARIZE1(0.001)" in out


def test_verify_nonlocal_9(capsys):
    code, out, _ = run(capsys, "verify", "--scheme", "nonlocal", "--df", "9")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)


def test_verify_json_and_conventional_skip(capsys):
    code, out, _ = run(capsys, "verify", "--scheme", "conventional", "--df", "5", "--format", "json")
    js = json.loads(out)
    assert code == 0 and js["passed"]
    assert js["certificates"][-1]["passed"] is None


def test_dem(capsys):
    code, out, _ = run(capsys, "dem", "--scheme", "nonlocal", "--df", "5", "--perfect-init")
    assert code == 0
    assert "# matchability mechanisms=" in out and "over_2=0" in out
    assert any(line.startswith("error(") for line in out.splitlines())


def test_sample_trivial(capsys):
    code, out, _ = run(
        capsys, "sample", "--scheme", "conventional", "--df", "3",
        "--p1", "0", "--p2", "0", "--pm", "0", "--shots", "100", "--threads", "1",
    )
    assert code == 0
    assert "\nrate 0\n" in out and "\nacceptance 1\n" in out


def test_sample_json_seed_from_env(capsys, monkeypatch):
    monkeypatch.setenv("QECF_SEED", "17")
    code, out, _ = run(capsys, "sample", "--scheme", "local", "--df", "3", "--shots", "200", "--format", "json", "--threads", "1")
    js = json.loads(out)
    assert code == 0 and js["config"]["seed"] == 17 and js["shots"] == 200


def test_sweep_deterministic(capsys, tmp_path):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"schemes": ["nonlocal", "local"], "d_f": [5], "ratio_grid": {"p2": 0.005, "ratios": [0.2, 1]},
                               "shots": 1000, "seed": 5, "perfect_init": True}))
    outs = []
    for k in range(2):
        path = tmp_path / f"out{k}.csv"
        code, _, _ = run(capsys, "sweep", "--config", str(cfg), "--out", str(path), "--threads", "1")
        assert code == 0
        outs.append([line for line in path.read_text().splitlines() if not line.startswith("#")])
    assert outs[0] == outs[1] and len(outs[0]) == 5


def test_cost_table(capsys):
    code, out, _ = run(capsys, "cost", "--t2q", "1", "--tm", "10", "--psucc", "0.759")
    assert code == 0
    rows = {tuple(line.split()[:2]): line.split()[2] for line in out.splitlines()[2:]}
    assert rows[("conventional", "17")] == "64.89"
    assert rows[("nonlocal", "17")] == "48.89"
    assert rows[("local", "17")] == "64.89"


@pytest.mark.parametrize("argv", [
    ["sample", "--scheme", "nonlocal", "--df", "7"],
    ["layout", "--d", "2"],
    ["cost", "--psucc", "0"],
    ["frobnicate"],
    ["sample", "--scheme", "local", "--df", "5", "--threads", "0"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")


def test_bad_sweep_config(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run(capsys, "sweep", "--config", str(p))
    assert code == 2 and err.startswith("error:")


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "qecf.cli", "cost", "--format", "csv"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("scheme,d_f,time,growth_cx")
