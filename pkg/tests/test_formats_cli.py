import json
import subprocess
import sys
from fractions import Fraction

import pytest
from hypothesis import given, settings

from fpabne.auction import StrategyProfile, verify_epsilon_bne
from fpabne.cli import Budgets, dispatch
from fpabne.errors import DomainError, StructureError, ValidationError
from fpabne.formats import parse_instance, parse_strategy, serialize_instance, serialize_strategy

from conftest import DATA, GOLDEN_FLOAT, golden_instance
from strategies import instance_and_profile

F = Fraction
GOLDEN = str(DATA / "golden.json")
GOLDEN_EQ = str(DATA / "golden_eq.json")
CYCLE = str(DATA / "cycle3.gc")
HALF = str(DATA / "half.txt")


# -- file formats --------------------------------------------------------------------------


def test_golden_file_roundtrip():
    inst = parse_instance((DATA / "golden.json").read_text())
    assert inst == golden_instance()
    text = serialize_instance(inst)
    assert parse_instance(text) == inst
    assert serialize_instance(parse_instance(text)) == text


@settings(max_examples=40)
@given(instance_and_profile(max_n=3, max_bids=3))
def test_roundtrip_property(pair):
    inst, prof = pair
    assert parse_instance(serialize_instance(inst)) == inst
    assert parse_strategy(serialize_strategy(prof)) == prof


def test_files_hold_no_floats():
    text = serialize_strategy(StrategyProfile(((0.1, 1.0),)))
    doc = json.loads(text)
    assert all(isinstance(x, str) for row in doc["jumps"] for x in row)
    assert parse_strategy(text).jumps[0][0] == F(0.1)


def test_volume_below_one_is_a_validation_error():
    doc = {"bids": ["0"], "n": 2, "prior": {"blocks": [{"interval": ["0", "1"], "volume": "9/10"}]}}
    with pytest.raises(ValidationError) as info:
        parse_instance(json.dumps(doc))
    assert info.value.violations


def test_missing_bids_is_a_syntax_error():
    with pytest.raises(StructureError, match="bids"):
        parse_instance('{"n": 2, "prior": "uniform"}')


def test_bad_json_reports_position():
    with pytest.raises(StructureError, match="line 1, column"):
        parse_instance('{"bids": [0,}')


def test_budget_overrides():
    assert Budgets.from_env("restarts=3, max_iters=10").restarts == 3
    assert Budgets.from_env(None) == Budgets()
    for bad in ("nope=1", "restarts=0", "restarts=x"):
        with pytest.raises(DomainError):
            Budgets.from_env(bad)


# -- commands --------------------------------------------------------------------------------


def test_verify_golden_equilibrium(capsys):
    assert dispatch(["verify", "--instance", GOLDEN, "--strategy", GOLDEN_EQ, "--eps", "1e-9"]) == 0
    assert capsys.readouterr().out.strip().endswith("certified")


def test_verify_rejects_non_equilibrium(tmp_path, capsys):
    bad = tmp_path / "s.json"
    bad.write_text(serialize_strategy(StrategyProfile.constant(3, [F(3, 4), F(1)])))
    assert dispatch(["verify", "--instance", GOLDEN, "--strategy", str(bad), "--eps", "1e-9"]) == 1
    out = capsys.readouterr().out
    assert "bidder" in out and out.strip().endswith("not certified")


@pytest.mark.parametrize("method", ["enumerate", "brouwer"])
def test_solve_golden(tmp_path, method):
    out, rep = tmp_path / "s.json", tmp_path / "r.json"
    code = dispatch(
        ["solve", "--instance", GOLDEN, "--eps", "1e-6", "--method", method, "--out", str(out), "--report", str(rep)]
    )
    assert code == 0
    prof = parse_strategy(out.read_text())
    assert all(abs(float(row[0]) - GOLDEN_FLOAT) <= 1e-6 for row in prof.jumps)
    report = json.loads(rep.read_text())
    assert report["certified"] and report["method"] == method
    # the written strategy re-verifies at the same eps
    assert verify_epsilon_bne(golden_instance(), prof, F(1, 10**6)).is_eq
    assert dispatch(["verify", "--instance", GOLDEN, "--strategy", str(out), "--eps", "1e-6"]) == 0


def test_circuit_check_half(capsys):
    assert dispatch(["circuit", "check", "--circuit", CYCLE, "--assignment", HALF, "--eps", "0"]) == 0
    assert "satisfied" in capsys.readouterr().out


def test_circuit_solve_and_lower(tmp_path, capsys):
    sol = tmp_path / "a.txt"
    assert dispatch(["circuit", "solve", "--circuit", CYCLE, "--eps", "1e-9", "--out", str(sol)]) == 0
    assert dispatch(["circuit", "check", "--circuit", CYCLE, "--assignment", str(sol), "--eps", "1e-9"]) == 0
    src = tmp_path / "c.gc"
    src.write_text("0 G1\n1 G- 0 2\n2 G/2 0\n")
    low = tmp_path / "low.gc"
    assert dispatch(["circuit", "lower", "--circuit", str(src), "--target", "phi", "--out", str(low)]) == 0
    text = low.read_text()
    assert "# multiplier 99" in text
    assert "multiplier 99" in capsys.readouterr().err


def test_reduce_writes_instance_and_sidecar(tmp_path):
    inst, side = tmp_path / "i.json", tmp_path / "roles.txt"
    assert dispatch(["reduce", "--circuit", CYCLE, "--out", str(inst), "--sidecar", str(side)]) == 0
    assert parse_instance(inst.read_text()).n == 30
    assert "bidder 0" in side.read_text()


def test_best_response_command(tmp_path):
    start = tmp_path / "s.json"
    start.write_text(serialize_strategy(StrategyProfile.constant(3, [F(3, 4), F(1)])))
    out = tmp_path / "br.json"
    args = ["best-response", "--instance", GOLDEN, "--strategy", str(start), "--bidder", "1", "--out", str(out)]
    assert dispatch(args) == 0
    prof = parse_strategy(out.read_text())
    assert prof.jumps[0] == (F(3, 4), 1)
    rep = verify_epsilon_bne(golden_instance(), prof, 0, bidders=[1])
    assert rep.max_regret == 0


def test_export_circuit(tmp_path):
    out = tmp_path / "dag.txt"
    assert dispatch(["export-circuit", "--instance", GOLDEN, "--out", str(out)]) == 0
    assert out.read_text().strip()


# -- exit codes --------------------------------------------------------------------------------


def test_usage_errors_exit_2(capsys):
    assert dispatch([]) == 2
    assert dispatch(["solve", "--instance", GOLDEN]) == 2
    assert dispatch(["verify", "--instance", GOLDEN, "--strategy", GOLDEN_EQ, "--eps", "abc"]) == 2
    capsys.readouterr()


def test_invalid_input_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bids": ["0"], "n": 2, "prior": {"blocks": [{"interval": ["0", "1"], "volume": "0.9"}]}}))
    assert dispatch(["verify", "--instance", str(bad), "--strategy", GOLDEN_EQ, "--eps", "0"]) == 3
    assert "invalid input" in capsys.readouterr().err
    assert dispatch(["verify", "--instance", str(tmp_path / "missing.json"), "--strategy", GOLDEN_EQ, "--eps", "0"]) == 3


def test_budget_exceeded_exits_4(monkeypatch, capsys):
    monkeypatch.setenv("FPABNE_BUDGETS", "max_guesses=3")
    assert dispatch(["solve", "--instance", GOLDEN, "--eps", "1e-6", "--method", "enumerate"]) == 4
    assert "budget exceeded" in capsys.readouterr().err


def test_bad_budget_env_exits_3(monkeypatch, capsys):
    monkeypatch.setenv("FPABNE_BUDGETS", "restarts=-1")
    assert dispatch(["verify", "--instance", GOLDEN, "--strategy", GOLDEN_EQ, "--eps", "1e-9"]) == 3
    capsys.readouterr()


def test_deterministic_subprocess_output(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.json"
        subprocess.run(
            [sys.executable, "-m", "fpabne.cli", "solve", "--instance", GOLDEN, "--eps", "1e-6", "--seed", "7",
             "--out", str(path), "--report", str(tmp_path / f"r{k}.json")],
            check=True,
        )
        outs.append((path.read_bytes(), (tmp_path / f"r{k}.json").read_bytes()))
    assert outs[0] == outs[1]
