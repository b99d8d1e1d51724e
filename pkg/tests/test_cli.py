from __future__ import annotations

import csv

import orjson
import pytest

from lqmfg.cli import main
from lqmfg.core.storage import read_json
from tests.conftest import SQRT2, spec_path


def _write(tmp_path, name: str, doc) -> str:
    p = tmp_path / name
    p.write_bytes(orjson.dumps(doc))
    return str(p)


def _stdout_json(capsysbinary):
    return orjson.loads(capsysbinary.readouterr().out)


def _stderr_json(capsysbinary):
    return orjson.loads(capsysbinary.readouterr().err.strip().splitlines()[-1])


SCALAR_MFG = {
    "kind": "mean_field", "d": 1, "A": [[0.0]], "sigma": [[SQRT2]], "R": [[1.0]],
    "Qhat": [[1.0]], "Bhat": [[0.0]], "Chat": [[0.0]], "Dhat": [[0.0]], "H": [0.0], "Delta": [0.0],
}


# ──────────────────────────────────────────────────────────────
# check
# ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "name, code",
    [
        ("canonical_mean_field.json", 0),
        ("symmetric_nearly_identical.json", 0),
        ("two_player_scalar.json", 0),
        ("consensus_AI.json", 0),
        ("consensus_A0.json", 10),
    ],
)
def test_check_exit_codes(capsysbinary, name, code):
    assert main(["check", spec_path(name)]) == code
    doc = _stdout_json(capsysbinary)
    assert doc["exit_code"] == code
    assert len(doc["spec_key"]) == 43


def test_check_reports_null_space_dimension(capsysbinary):
    main(["check", spec_path("consensus_A0.json")])
    cond = _stdout_json(capsysbinary)["conditions"]
    assert cond["null_dim"] == 2
    assert cond["verdict_exists"] and not cond["verdict_unique"]


def test_check_not_exists(tmp_path, capsysbinary):
    spec = dict(SCALAR_MFG, d=2, A=[[0.0, 1.0], [0.0, 0.0]], sigma=[[1.0, 0.0], [0.0, 1.0]],
                R=[[1.0, 0.0], [0.0, 1.0]], Qhat=[[1.0, 0.0], [0.0, 1.0]],
                Bhat=[[0.0, 0.0], [0.0, 0.0]], Chat=[[0.0, 0.0], [0.0, 0.0]],
                Dhat=[[0.0, 0.0], [0.0, 0.0]], H=[0.0, 0.0], Delta=[0.0, 0.0])
    assert main(["check", _write(tmp_path, "nilpotent.json", spec)]) == 20
    cond = _stdout_json(capsysbinary)["conditions"]
    assert cond["failing_clause"].startswith("sylvester")


def test_check_hypothesis_violation(tmp_path, capsysbinary):
    path = _write(tmp_path, "bad_r.json", dict(SCALAR_MFG, R=[[-1.0]]))
    assert main(["check", path]) == 5
    doc = _stdout_json(capsysbinary)
    assert doc["hypotheses"] == ["R not SPD"]
    assert doc["conditions"] is None


def test_spec_key_ignores_layout(tmp_path, capsysbinary):
    a = _write(tmp_path, "a.json", SCALAR_MFG)
    b = tmp_path / "b.json"
    b.write_bytes(orjson.dumps(dict(reversed(list(SCALAR_MFG.items()))), option=orjson.OPT_INDENT_2))
    main(["check", a])
    key_a = _stdout_json(capsysbinary)["spec_key"]
    main(["check", str(b)])
    assert _stdout_json(capsysbinary)["spec_key"] == key_a


@pytest.mark.parametrize(
    "content, code",
    [
        (b"{not json", 2),
        (orjson.dumps({"kind": "triangle", "d": 1}), 2),
        (orjson.dumps(dict(SCALAR_MFG, A=[[0.0], [0.0]])), 3),
        (orjson.dumps(dict(SCALAR_MFG, R=[[1.0, 0.0]])), 3),
    ],
)
def test_malformed_specs(tmp_path, capsysbinary, content, code):
    p = tmp_path / "spec.json"
    p.write_bytes(content)
    assert main(["check", str(p)]) == code
    err = _stderr_json(capsysbinary)
    assert set(err) == {"code", "message"}


def test_missing_spec_file(tmp_path, capsysbinary):
    assert main(["check", str(tmp_path / "nope.json")]) == 2
    assert _stderr_json(capsysbinary)["code"] == "spec_not_found"


# ──────────────────────────────────────────────────────────────
# solve
# ──────────────────────────────────────────────────────────────

def test_solve_canonical(tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", spec_path("canonical_mean_field.json"), "--out", str(out)]) == 0
    doc = read_json(str(out))
    assert doc["kind"] == "mean_field"
    p = doc["players"][0]
    assert p["lam"] == pytest.approx(SQRT2)
    assert p["Sigma"][0][0] == pytest.approx(SQRT2)
    assert doc["residuals"]["hjb_max"] < 1e-8
    assert doc["family"] is None


def test_solve_consensus_identity_has_zero_means(tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", spec_path("consensus_AI.json"), "--out", str(out)]) == 0
    doc = read_json(str(out))
    assert len(doc["players"]) == 3
    for p in doc["players"]:
        assert p["mu"] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_solve_family_and_member_selection(tmp_path):
    out = tmp_path / "family.json"
    assert main(["solve", spec_path("consensus_diag01.json"), "--out", str(out)]) == 0
    fam = read_json(str(out))["family"]
    assert fam["dim"] == 1

    out = tmp_path / "member.json"
    argv = ["solve", spec_path("consensus_diag01.json"), "--family-member", "1", "--family-step", "2", "--out", str(out)]
    assert main(argv) == 0
    doc = read_json(str(out))
    assert doc["family"] is None
    for p in doc["players"]:
        assert abs(p["mu"][0]) == pytest.approx(2.0)
        assert p["mu"][1] == pytest.approx(0.0, abs=1e-12)
    assert doc["residuals"]["hjb_max"] < 1e-8


def test_solve_member_out_of_range(capsysbinary):
    assert main(["solve", spec_path("consensus_diag01.json"), "--family-member", "5"]) == 4
    assert _stderr_json(capsysbinary)["code"] == "family_member"


def test_solve_conditions_fail(tmp_path, capsysbinary):
    spec = {
        "kind": "nearly_identical", "N": 3, "d": 1, "A": [[0.0]], "sigma": [[1.0]], "R": [[1.0]],
        "Q": [[1.0]], "B": [[-1.0]], "H": [1.0], "Delta": [0.0], "C": [[0.5]], "D": [[0.0]],
    }
    assert main(["solve", _write(tmp_path, "rank.json", spec)]) == 20
    assert "rank" in _stderr_json(capsysbinary)["message"]


# ──────────────────────────────────────────────────────────────
# simulate
# ──────────────────────────────────────────────────────────────

def test_simulate_canonical_with_deviation(tmp_path):
    spec = spec_path("canonical_mean_field.json")
    sol = tmp_path / "sol.json"
    est = tmp_path / "est.json"
    trace = tmp_path / "trace.csv"
    assert main(["solve", spec, "--out", str(sol)]) == 0
    argv = [
        "simulate", spec, str(sol),
        "--dt", "0.01", "--T", "40", "--replicas", "8", "--seed", "3",
        "--deviate", "1:0:0.5",
        "--trace-csv", str(trace),
        "--out", str(est),
    ]
    assert main(argv) == 0

    doc = read_json(str(est))
    assert doc["config"]["replicas"] == 8
    p = doc["players"][0]
    assert abs(p["cost_hat"] - SQRT2) <= 5.0 * p["cost_se"] + 0.02
    (dev,) = doc["deviations"]
    assert dev["player"] == 1 and dev["entry"] == 0
    assert dev["strictly_above"] is True
    assert dev["exact_cost"] > dev["lam"]

    with open(trace, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "player", "x1"]
    assert len(rows) > 1


def test_simulate_rejects_mismatched_solution(tmp_path, capsysbinary):
    sol = tmp_path / "sol.json"
    assert main(["solve", spec_path("canonical_mean_field.json"), "--out", str(sol)]) == 0
    capsysbinary.readouterr()
    assert main(["simulate", spec_path("symmetric_nearly_identical.json"), str(sol), "--T", "1"]) == 3


def test_simulate_bad_deviation(tmp_path, capsysbinary):
    spec = spec_path("canonical_mean_field.json")
    sol = tmp_path / "sol.json"
    main(["solve", spec, "--out", str(sol)])
    capsysbinary.readouterr()
    argv = ["simulate", spec, str(sol), "--dt", "0.01", "--T", "2", "--replicas", "2", "--deviate", "1:7:0.5"]
    assert main(argv) == 2


# ──────────────────────────────────────────────────────────────
# limit
# ──────────────────────────────────────────────────────────────

def test_limit_consensus_converges(tmp_path):
    out = tmp_path / "limit.json"
    table = tmp_path / "limit.csv"
    argv = ["limit", spec_path("consensus_AI.json"), "--N", "2,4,8,16,32", "--csv", str(table), "--out", str(out)]
    assert main(argv) == 0
    doc = read_json(str(out))
    assert doc["N_list"] == [2, 4, 8, 16, 32]
    assert doc["all_converged"]
    sig = [r["dist_Sigma"] for r in doc["rows"]]
    assert all(a > b for a, b in zip(sig, sig[1:]))

    with open(table, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][:3] == ["N", "ok", "failure"]
    assert rows[-1][0] == "slope"
    assert len(rows) == 1 + 5 + 1


def test_limit_frozen_coupling_exits_diverged():
    assert main(["limit", spec_path("frozen_b_mean_field.json"), "--N", "2,8,32,128"]) == 41


def test_limit_singular_limit():
    assert main(["limit", spec_path("consensus_A0.json"), "--N", "2,4"]) == 40


def test_limit_needs_a_family(capsysbinary):
    assert main(["limit", spec_path("symmetric_nearly_identical.json")]) == 2
    assert _stderr_json(capsysbinary)["code"] == "not_a_family"


# ──────────────────────────────────────────────────────────────
# consensus-demo
# ──────────────────────────────────────────────────────────────

def test_consensus_demo_walks_the_family(tmp_path):
    out = tmp_path / "demo.json"
    assert main(["consensus-demo", "--N", "3", "--A-diag", "0,1", "--members", "3", "--out", str(out)]) == 0
    doc = read_json(str(out))
    assert (doc["kernel_dim"], doc["family_dim"]) == (1, 1)
    assert [m["coefficients"] for m in doc["members"]] == [[0.0], [1.0], [2.0]]
    for m in doc["members"]:
        t = m["coefficients"][0]
        for mu in m["mu"]:
            assert abs(mu[0]) == pytest.approx(t, abs=1e-12)
            assert mu[1] == pytest.approx(0.0, abs=1e-12)
        assert m["hjb_max"] < 1e-8
        assert m["sim_mean"] is None


def test_consensus_demo_unique_when_drift_invertible(tmp_path):
    out = tmp_path / "demo.json"
    assert main(["consensus-demo", "--A-diag", "1,2", "--out", str(out)]) == 0
    doc = read_json(str(out))
    assert doc["family_dim"] == 0
    assert len(doc["members"]) == 1


def test_consensus_demo_with_simulation(tmp_path):
    out = tmp_path / "demo.json"
    argv = [
        "consensus-demo", "--A-diag", "0,1", "--members", "2", "--simulate",
        "--T", "20", "--dt", "0.01", "--replicas", "8", "--seed", "5", "--out", str(out),
    ]
    assert main(argv) == 0
    doc = read_json(str(out))
    for m in doc["members"]:
        assert len(m["sim_mean"]) == 3
        assert m["sim_mean_ok"] is not None
