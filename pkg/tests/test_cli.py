import json

import numpy as np
import pytest

from mflab.cli import main
from mflab.matcore import MatTuple
from mflab.pvcrossed import truncated_shift
from mflab.report import canonical_dumps, validate_report


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_pv_table_strictly_decreasing(capsys):
    code, out, _ = run_cli(["pv", "--nj", "4,8,16"], capsys)
    assert code == 0
    rep = json.loads(out)
    col = [r["commutator_norm"] for r in rep["payload"]["table"]]
    assert all(b < a for a, b in zip(col, col[1:]))
    validate_report(rep)


def test_freeness_zero_failures(capsys):
    code, out, _ = run_cli(["freeness", "--n", "2", "--m", "3", "--trials", "100", "--seed", "7"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["payload"]["failures"] == []


def test_invalid_flag_exit_one(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out, err = run_cli(["pv", "--nj", "4", "--bogus", "-o", str(target)], capsys)
    assert code == 1 and "usage" in err and out == ""
    assert not target.exists()


def test_unknown_subcommand(capsys):
    code, _, err = run_cli(["nonsense"], capsys)
    assert code == 1 and "invalid choice" in err


def test_malformed_input_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    target = tmp_path / "out.json"
    code, _, err = run_cli(["dilate", "--input", str(bad), "-o", str(target)], capsys)
    assert code == 1 and "error" in err and not target.exists()


def test_seed_required(capsys):
    code, _, _ = run_cli(["freeness", "--trials", "5"], capsys)
    assert code == 1
    code, _, _ = run_cli(["dilate", "--random", "dim=4"], capsys)
    assert code == 1


def test_nonpositive_tolerance_rejected(capsys):
    code, _, _ = run_cli(["finite-crossed", "--group", "Z2", "--seed", "1", "--tol", "0"], capsys)
    assert code == 1


def test_certificate_failure_exit_two(capsys):
    code, out, _ = run_cli(["crossed", "--theta", "0.3", "--nj", "16", "--dim", "4", "--seed", "1", "--r1", "2"],
                           capsys)
    rep = json.loads(out)
    assert code == 2 and rep["passed"] is False
    assert any(not c["passed"] for c in rep["certificates"])


def test_output_file_matches_stdout(tmp_path, capsys):
    argv = ["coset", "--example", "z-2z", "--g", "t^5"]
    _, out, _ = run_cli(argv, capsys)
    target = tmp_path / "coset.json"
    assert main(argv + ["-o", str(target)]) == 0
    assert target.read_text() == out
    rep = json.loads(out)
    assert rep["payload"]["sigma"] == [2, 1]
    assert rep["payload"]["h"] == ["t^4", "t^6"]


@pytest.fixture
def report_inputs(tmp_path):
    models = [MatTuple((truncated_shift(N),)).to_json() for N in (8, 16)]
    (tmp_path / "models.json").write_text(json.dumps({"models": models}))
    (tmp_path / "polys.txt").write_text("X1 + X1'\n# comment\n2X1\n")
    return tmp_path


SCENARIOS = [
    ["dilate", "--random", "dim=8,n=2,m=1,seed=3", "--include-matrices"],
    ["pv", "--nj", "4,8,16,32"],
    ["crossed", "--theta", "0.3", "--nj", "16,32", "--dim", "4", "--seed", "5"],
    ["finite-crossed", "--group", "S3", "--seed", "2", "--samples", "20"],
    ["finite-crossed", "--group", "Z2", "--seed", "2", "--samples", "20"],
    ["freeness", "--trials", "60", "--seed", "11"],
    ["coset", "--example", "f2-s2", "--g", "g1*g2^-2;21"],
    ["norm", "--oracle", "circle", "--poly", "X1+X1'"],
    ["norm", "--oracle", "torus", "--m", "2", "--poly", "X1 + X2 + X1*X2"],
    ["ball", "--n", "2", "--poly", "X1+X1'+X2+X2'", "--radius", "5"],
]


@pytest.mark.parametrize("argv", SCENARIOS, ids=lambda a: a[0])
def test_scenarios_validate_and_are_deterministic(argv, capsys):
    code1, out1, _ = run_cli(argv, capsys)
    code2, out2, _ = run_cli(argv, capsys)
    assert code1 == code2 == 0
    assert out1 == out2
    rep = json.loads(out1)
    validate_report(rep)
    assert rep["schema"] == "mflab.run/1" and "wall_clock_s" not in rep


@pytest.mark.parametrize("oracle", ["circle", "ball:1:4"])
def test_report_subcommand(report_inputs, oracle, capsys):
    argv = ["report", "--models", str(report_inputs / "models.json"),
            "--polys", str(report_inputs / "polys.txt"), "--oracle", oracle]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    rep = json.loads(out)
    validate_report(rep)
    assert len(rep["payload"]["rows"]) == 4


def test_timing_flag(capsys):
    code, out, _ = run_cli(["pv", "--nj", "4", "--timing"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["wall_clock_s"] >= 0
    validate_report(rep)


def test_canonical_dumps_layout():
    text = canonical_dumps({"b": [1.0, 0.1], "a": {"z": True, "y": None}})
    assert text == '{\n  "a": {\n    "y": null,\n    "z": true\n  },\n  "b": [1, 0.10000000000000001]\n}\n'
    with pytest.raises(ValueError):
        canonical_dumps({"x": float("nan")})
    assert canonical_dumps({"v": np.float64(2.5)}) == '{\n  "v": 2.5\n}\n'
