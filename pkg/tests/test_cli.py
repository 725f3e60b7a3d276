import json

import pytest

from conftest import BAD_FIXTURES, CORRUPT_FIXTURES, ENV_FIXTURES, FIXTURES
from dgroves.cli import AUDIT_FAILURE, INPUT_ERROR, OK, run

E2 = str(FIXTURES / "E2.json")


def _run(args, tmp_path, name="r.json"):
    out = tmp_path / name
    code = run(args + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None), out


def test_solve_report(tmp_path):
    code, doc, out = _run(["solve", E2], tmp_path)
    assert code == OK and doc["passed"]
    rep = doc["report"]
    assert rep["policy"] == ["0", "1", "1", "1"] and len(rep["W"]) == 4
    assert doc["config"]["seed"] == 0 and doc["config"]["max_iters"] == 1_000_000
    csv = out.with_suffix(".csv").read_bytes()
    assert csv.startswith(b"state,action,W,") and b"\r" not in csv


@pytest.mark.parametrize("kind", ["team", "pivot"])
@pytest.mark.parametrize("env", ENV_FIXTURES)
def test_verify_ic_groves(tmp_path, kind, env):
    code, doc, _ = _run(["verify-ic", "--kind", kind, str(FIXTURES / env)], tmp_path)
    assert code == OK and doc["report"]["passed"]


@pytest.mark.parametrize("fixture", CORRUPT_FIXTURES)
def test_verify_ic_corrupted(tmp_path, fixture):
    code, doc, _ = _run(["verify-ic", "--transfers", str(FIXTURES / fixture), E2], tmp_path)
    assert code == AUDIT_FAILURE
    w = doc["report"]["witness"]
    assert w["gain"] > 1e-8 and {"player", "state", "report"} <= set(w)


@pytest.mark.parametrize("fixture", CORRUPT_FIXTURES)
def test_extract_phi_corrupted(tmp_path, fixture):
    code, doc, _ = _run(["extract-phi", "--transfers", str(FIXTURES / fixture), E2], tmp_path)
    assert code == AUDIT_FAILURE and doc["report"]["max_score"] >= 0.04


def test_custom_rules(tmp_path):
    code, doc, _ = _run(["mechanism", "--kind", "custom", "--rules", str(FIXTURES / "E2_rules.json"), E2], tmp_path)
    assert code == OK and doc["report"]["transfer_report"]["kind"] == "custom"


def test_best_response(tmp_path):
    assert _run(["best-response", "--kind", "pivot", E2], tmp_path)[0] == OK
    code, doc, _ = _run(["best-response", "--transfers", str(FIXTURES / CORRUPT_FIXTURES[0]), "--player", "1", E2],
                        tmp_path)
    assert code == AUDIT_FAILURE and list(doc["report"]["players"]) == ["1"]


def test_deviate(tmp_path):
    code, doc, _ = _run(["deviate", "--paths", "5000", "--player", "2", "--variant", "paper-literal", E2], tmp_path)
    assert code == OK and doc["report"]["comparisons"][0]["variant"] == "paper-literal"


def test_example1_exit_codes(tmp_path):
    code, doc, out = _run(["example1", "--gamma", "0", "--delta", "0.5", "--paths", "500"], tmp_path)
    assert code == OK and doc["report"]["linear"]
    assert out.with_suffix(".csv").read_text().splitlines()[0] == "theta0,report,value,se"


def test_probe_command(tmp_path):
    code, doc, _ = _run(["probe", "--world", "iid", "--paths", "300", "--grid", "3"], tmp_path)
    assert code == OK and doc["report"]["banner"].startswith("heuristic")


@pytest.mark.parametrize("fixture", BAD_FIXTURES)
def test_bad_environment_is_input_error(tmp_path, fixture, capsys):
    assert run(["solve", str(FIXTURES / "bad" / fixture)]) == INPUT_ERROR
    assert fixture in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["solve", "missing.json"],
    ["verify-ic", "--kind", "custom", E2],
    ["verify-ic", "--rules", str(FIXTURES / "E2_rules.json"), E2],
    ["verify-ic", "--transfers", "missing.json", E2],
    ["best-response", "--player", "9", E2],
    ["solve", "--tol", "-1", E2],
    ["frobnicate"],
    ["example1", "--cost", "2"],
    [],
])
def test_input_errors(argv):
    assert run(argv) == INPUT_ERROR


def test_byte_identical_reports(tmp_path):
    for args in (["deviate", "--paths", "2000", E2], ["example1", "--paths", "1000"],
                 ["probe", "--paths", "200", "--grid", "3"]):
        out = tmp_path / "r.json"
        run(args + ["--out", str(out)])
        first = out.read_bytes(), out.with_suffix(".csv").read_bytes()
        run(args + ["--out", str(out)])
        assert (out.read_bytes(), out.with_suffix(".csv").read_bytes()) == first


def test_stdout_report(capsys):
    assert run(["solve", E2]) == OK
    assert json.loads(capsys.readouterr().out)["command"] == "solve"
