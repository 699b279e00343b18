import csv
import io
import json
import math
from pathlib import Path

import pytest

from gchan import interpbound
from gchan.cli import dumps, main

CHANNELS = Path(__file__).resolve().parents[1] / "channels"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def chan(name):
    return CHANNELS / f"{name}.json"


def test_norm_attenuator(capsys):
    code, out, _ = run(capsys, "norm", chan("attenuator"), "--p", 2)
    doc = json.loads(out)
    assert code == 0
    assert doc["norm"] == pytest.approx(1.25, rel=1e-14)
    assert doc["invertible"] and doc["cp"]["is_cp"]


def test_norm_identity(capsys):
    code, out, _ = run(capsys, "norm", chan("identity"), "--p", 3)
    assert code == 0 and json.loads(out)["norm"] == 1


def test_norm_singular(capsys):
    code, out, _ = run(capsys, "norm", chan("singular"), "--p", 2)
    doc = json.loads(out)
    assert code == 0
    assert doc["norm"] == "unbounded" and doc["unbounded"] and not doc["invertible"]


def test_norm_not_cp(capsys):
    code, out, err = run(capsys, "norm", chan("not_cp"), "--p", 2)
    assert code == 2
    doc = json.loads(out)
    assert doc["cp"]["min_eig_first"] == pytest.approx(-0.08, abs=1e-12)
    assert "completely positive" in err


@pytest.mark.parametrize("content", ["{not json", '{"s": 1, "K": [[1]]}', '{"s": 1, "K": [["a"]], "mu": [[0]]}'])
def test_malformed_file(capsys, tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    code, _, _ = run(capsys, "norm", path, "--p", 2)
    assert code == 1


def test_missing_file(capsys, tmp_path):
    assert run(capsys, "norm", tmp_path / "missing.json", "--p", 2)[0] == 1


def test_converge_attenuator(capsys):
    code, out, _ = run(capsys, "converge", chan("attenuator"), "--E-grid", "1,10,100,10000", "--p", 2)
    rows = json.loads(out)["rows"]
    assert code == 0 and [r["E"] for r in rows] == [1, 10, 100, 10000]
    assert rows[-1]["norm_ratio"] == pytest.approx(1.25, rel=2e-4)
    assert rows[-1]["rel_dist"] < 2e-4


def test_converge_identity(capsys):
    code, out, _ = run(capsys, "converge", chan("identity"), "--p-grid", "1.5,2,3")
    rows = json.loads(out)["rows"]
    assert code == 0 and len(rows) == 12
    assert all(r["norm_ratio"] == pytest.approx(1, rel=1e-14) for r in rows)


def test_converge_divergence(capsys):
    code, out, _ = run(capsys, "converge", chan("attenuator"), "--E-grid", "100,1000,10000", "--p", 2, "--q", 1)
    doc = json.loads(out)
    assert code == 0
    slopes = [r["slope"] for r in doc["rows"][1:]]
    assert all(s == pytest.approx(0.5, rel=0.05) for s in slopes)
    assert doc["fitted_slope"]["2"] == pytest.approx(0.5, rel=0.05)


def test_oracle_commands(capsys):
    code, out, _ = run(capsys, "oracle", "--K2", 0.64, "--mu", 0.18, "--E", 1, "--p", 2)
    doc = json.loads(out)
    assert code == 0 and doc["pass"]
    assert doc["analytic"] == pytest.approx(0.662266, abs=1e-6)
    assert abs(doc["numeric"] - doc["analytic"]) < 1e-8
    code, out, _ = run(capsys, "oracle", chan("identity"), "--E", 2, "--p", 3)
    doc = json.loads(out)
    assert code == 0 and doc["rel_discrepancy"] < 1e-13
    code, out, _ = run(capsys, "oracle", chan("amplifier"), "--E", 1, "--p", 2)
    doc = json.loads(out)
    assert code == 0 and doc["analytic"] == pytest.approx(0.377964, abs=1e-6)
    assert doc["rel_discrepancy"] <= doc["tail_budget"] + 1e-12


def test_oracle_truncation_is_budgeted(capsys):
    # cutoff 3 loses most of omega_5; the reported tail budget accounts for it
    code, out, _ = run(capsys, "oracle", chan("attenuator"), "--E", 5, "--cutoff", 3)
    doc = json.loads(out)
    assert code == 0 and doc["tail_budget"] > 0.5


def test_oracle_failure_exit_code(capsys, monkeypatch):
    from gchan import fockoracle

    monkeypatch.setattr(fockoracle, "oracle_output_norm", lambda *a, **k: (0.5, 0.0))
    code, out, err = run(capsys, "oracle", chan("attenuator"), "--E", 1)
    assert code == 3
    assert json.loads(out)["pass"] is False and "disagrees" in err


def test_oracle_needs_params(capsys):
    assert run(capsys, "oracle", "--K2", 1.0)[0] == 1
    assert run(capsys, "oracle", "--K2", 0.64, "--mu", 0.1)[0] == 2


def test_interp_identity(capsys):
    code, out, _ = run(capsys, "interp", "--identity", "--d-max", 3, "--p-grid", "1.5,2,3")
    doc = json.loads(out)
    assert code == 0 and doc["violations"] == 0
    assert all(abs(e["slack"]) < 1e-14 for e in doc["maps"][0]["entries"])


@pytest.mark.parametrize("family", ["cp", "copositive"])
def test_interp_small_suite(capsys, family):
    code, out, _ = run(capsys, "interp", "--n-maps", 4, "--d-max", 4, "--family", family,
                       "--trials", 4, "--iters", 10)
    doc = json.loads(out)
    assert code == 0 and doc["violations"] == 0 and doc["n_maps"] == 4
    assert all(m["pre_transpose"] == (family == "copositive") for m in doc["maps"])


def test_interp_violation_exit(capsys, tmp_path, monkeypatch):
    monkeypatch.setattr(interpbound, "bound_rhs", lambda nmap, p: 1e-3)
    cx = tmp_path / "cx.json"
    code, _, err = run(capsys, "interp", "--n-maps", 1, "--d-max", 3, "--family", "cp", "--trials", 2,
                       "--iters", 2, "--counterexample-out", cx)
    assert code == 4
    assert json.loads(cx.read_text())[0]["rhs"] == 1e-3


def test_entropy_commands(capsys):
    code, out, _ = run(capsys, "entropy", chan("identity"), "--E-grid", "0,1,100")
    assert code == 0 and all(abs(r["entropy_gain"]) < 1e-12 for r in json.loads(out)["rows"])
    code, out, _ = run(capsys, "entropy", chan("attenuator"), "--E-grid", "10000")
    assert abs(json.loads(out)["rows"][0]["entropy_gain"] - math.log(0.64)) < 1e-4
    code, out, _ = run(capsys, "entropy", chan("amplifier"), "--E-grid", "0")
    assert json.loads(out)["rows"][0]["entropy_gain"] == pytest.approx(2 * math.log(2), rel=1e-13)


def test_entropy_singular_rejected(capsys):
    assert run(capsys, "entropy", chan("singular"))[0] == 1


def test_output_is_byte_identical(capsys, monkeypatch):
    argv = ("converge", chan("two_mode_block"), "--E-grid", "0,0.5,3,1000", "--p-grid", "1.1,2,10")
    first = run(capsys, *argv)[1]
    monkeypatch.setenv("GCHAN_THREADS", "4")
    second = run(capsys, *argv)[1]
    monkeypatch.setenv("GCHAN_THREADS", "1")
    third = run(capsys, *argv)[1]
    assert first == second == third


def test_csv_matches_json(capsys):
    argv = ("converge", chan("classical_noise"), "--E-grid", "0.5,7,300", "--p-grid", "1.5,3")
    rows = json.loads(run(capsys, *argv)[1])["rows"]
    table = list(csv.DictReader(io.StringIO(run(capsys, *argv, "--format", "csv")[1])))
    assert len(rows) == len(table)
    for r, t in zip(rows, table):
        for key, value in r.items():
            assert float(t[key]) == float(value)


def test_dumps_formats_floats_with_17_digits():
    assert dumps(0.1) == "0.10000000000000001"
    assert dumps({"a": [1, math.inf, None, True]}) == '{\n  "a": [\n    1,\n    "inf",\n    null,\n    true\n  ]\n}'
