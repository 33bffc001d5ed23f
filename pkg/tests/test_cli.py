import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sbcontract.cli import main
from sbcontract.scenario import shipped_scenario_path

EX1 = str(shipped_scenario_path())
PROVENANCE = ("gamma", "alpha_tilde", "beta_tilde", "epsilon", "separation_power", "bounds_route")


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _gamma_blocks(d):
    """Every nested dict carrying a ``gamma`` entry."""
    if isinstance(d, dict):
        if "gamma" in d and not isinstance(d["gamma"], dict):
            yield d
        for v in d.values():
            yield from _gamma_blocks(v)
    elif isinstance(d, list):
        for v in d:
            yield from _gamma_blocks(v)


def test_gramian_prints_M(capsys, tmp_path):
    code, out, _ = _run(capsys, "gramian", "--scenario", EX1, "--out", str(tmp_path / "g.json"))
    assert code == 0
    assert "0.333333333" in out and "12" in out
    d = json.loads((tmp_path / "g.json").read_text())
    assert np.allclose(d["gramian"]["M"], [[1 / 3, 1 / 2], [1 / 2, 1]], atol=1e-8)
    assert np.allclose(d["gramian"]["M_inv"], [[12, -6], [-6, 4]], atol=1e-6)


def test_gamma_power_one(capsys, tmp_path):
    code, out, _ = _run(capsys, "gamma", "--scenario", EX1, "--separation-power", "1",
                        "--out", str(tmp_path / "r.json"))
    assert code == 0
    assert "0.580025658" in out
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["gamma"]["gamma"] == pytest.approx(0.5800256583859738, abs=1e-9)


def test_solve_ratios_and_csv(capsys, tmp_path):
    t = tmp_path / "t.csv"
    code, out, _ = _run(capsys, "solve", "--scenario", EX1, "--telemetry", str(t), "--out", str(tmp_path / "s.json"))
    assert code == 0 and "PASS" in out
    d = json.loads((tmp_path / "s.json").read_text())
    gamma2 = d["gamma"]["gamma"]
    assert d["gamma"]["separation_power"] == 2
    raw = t.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.DictReader(raw.decode().splitlines()))
    assert list(rows[0]) == ["pass", "hilbert_distance", "ratio", "residual_rho0", "residual_rho1"]
    ratios = [float(r["ratio"]) for r in rows if r["ratio"]]
    assert ratios and all(r <= gamma2 + 1e-9 for r in ratios)


def test_determinism(capsys, tmp_path):
    outs = []
    for k in range(2):
        t = tmp_path / "t.csv"
        j = tmp_path / "r.json"
        assert main(["solve", "--scenario", EX1, "--seed", "7", "--telemetry", str(t), "--out", str(j)]) == 0
        outs.append((t.read_bytes(), j.read_bytes()))
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_report_keys_sorted_and_provenance(capsys, tmp_path):
    j = tmp_path / "e.json"
    assert main(["example1", "--out", str(j)]) == 0
    out = capsys.readouterr().out
    raw = j.read_bytes()
    assert b"\r" not in raw
    d = json.loads(raw)

    def check_sorted(x):
        if isinstance(x, dict):
            assert list(x) == sorted(x)
            for v in x.values():
                check_sorted(v)
        elif isinstance(x, list):
            for v in x:
                check_sorted(v)

    check_sorted(d)
    blocks = list(_gamma_blocks(d))
    assert len(blocks) >= 3
    for b in blocks:
        for key in PROVENANCE:
            assert key in b, (key, b)
    assert "0.580025658" in out and "0.213552" in out


def test_precondition_command(capsys, tmp_path):
    j = tmp_path / "p.json"
    code, out, _ = _run(capsys, "precondition", "--scenario", EX1, "--separation-power", "1", "--out", str(j))
    assert code == 0
    d = json.loads(j.read_text())
    txt = json.dumps(d)
    assert "0.213552" in txt and "0.580025658" in txt


def test_simulate_command(capsys, tmp_path):
    j = tmp_path / "m.json"
    code, out, _ = _run(capsys, "simulate", "--scenario", EX1, "--paths", "300", "--out", str(j))
    assert code == 0
    assert json.loads(j.read_text())["command"] == "simulate"


def test_separations_both_powers(capsys):
    code, out, _ = _run(capsys, "separations", "--scenario", EX1)
    assert code == 0
    assert "38.9705627" in out and "6.24264069" in out  # 22 + 12 sqrt 2 and its root


def test_exit_code_input_errors(capsys, tmp_path):
    assert _run(capsys, "gamma")[0] == 2  # missing --scenario
    assert _run(capsys, "gamma", "--scenario", str(tmp_path / "missing.toml"))[0] == 2
    assert _run(capsys, "bogus", "--scenario", EX1)[0] == 2
    assert _run(capsys, "gamma", "--scenario", EX1, "--separation-power", "3")[0] == 2
    bad = tmp_path / "bad.toml"
    bad.write_text(shipped_scenario_path().read_text().replace("epsilon = 0.5", "epsilon = 0"))
    code, _, err = _run(capsys, "gamma", "--scenario", str(bad))
    assert code == 2 and "system.epsilon" in err


def test_exit_code_strict(capsys):
    assert _run(capsys, "solve", "--scenario", EX1, "--max-pass", "2", "--strict")[0] == 3
    assert _run(capsys, "solve", "--scenario", EX1, "--max-pass", "2")[0] == 0


def test_exit_code_numerical(capsys, tmp_path):
    sc = tmp_path / "unc.toml"
    sc.write_text(
        """
[system]
A = [[0.0, 0.0], [0.0, 0.0]]
B = [[1.0], [0.0]]
epsilon = 1.0
[supports.X0]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0
[supports.X1]
kind = "ball"
center = [3.0, 0.0]
radius = 1.0
"""
    )
    code, _, err = _run(capsys, "gamma", "--scenario", str(sc))
    assert code == 1 and "Uncontrollable" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sbcontract", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "sbcontract" in res.stdout
