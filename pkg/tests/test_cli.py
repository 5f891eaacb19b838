from pathlib import Path

import pytest

from mumarket.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EXP = str(CONFIGS / "exponential.json")


def test_simulate_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--config", EXP, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "converged: true" in text
    assert "final price: 0.6666666" in text
    assert out.read_text().startswith("t,trader,z_1,z_2,p_1,p_2,V_1,U")


def test_simulate_json_and_seed(tmp_path):
    out = tmp_path / "traj.json"
    assert main(["simulate", "--config", str(CONFIGS / "exponential_three_traders.json"),
                 "--seed", "5", "--format", "json", "--out", str(out)]) == 0
    assert out.read_text().lstrip().startswith("{")


def test_unconverged_exit_code(tmp_path):
    code = main(["simulate", "--config", str(CONFIGS / "hara_example_s1.json"),
                 "--max-rounds", "2", "--out", str(tmp_path / "t.csv")])
    assert code == 2


@pytest.mark.parametrize("order, charge", [("1,0", "0.620114506958"), ("1,1", "1"), ("0,0", "0")])
def test_price(order, charge, capsys):
    assert main(["price", "--config", EXP, "--order", order]) == 0
    assert f"delta_w: {charge}\n" in capsys.readouterr().out


def test_bad_inputs_exit_one(tmp_path, capsys):
    assert main(["price", "--config", EXP, "--order", "1,x"]) == 1
    assert main(["price", "--config", EXP, "--order", "1,2,3"]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"securities\": 2,\n}")
    assert main(["simulate", "--config", str(bad)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_formulas(capsys):
    assert main(["formulas", "exp-limit", "--config", EXP]) == 0
    assert "limiting price: 0.6666666667, 0.3333333333" in capsys.readouterr().out
    hara = str(CONFIGS / "hara_example_s1.json")
    assert main(["formulas", "hara-approx", "--config", hara]) == 0
    assert main(["formulas", "omega-dagger", "--config", hara]) == 0
    assert main(["formulas", "hara-approx", "--config", EXP]) == 1


def test_frontier(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["frontier", "--config", str(CONFIGS / "hara_example_s1.json"), "--points", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 6 and lines[0].startswith("omega_1")


def test_reproduce_small_batch(tmp_path):
    assert main(["reproduce", "table3", "--rows", "1", "--runs", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "table3.csv").exists()


def test_verify_subset(capsys):
    assert main(["verify", "--only", "2,5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]  2" in out and "[PASS]  5" in out
