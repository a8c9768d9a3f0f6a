import json

import pytest

from qnnstab import bounds
from qnnstab.cli import emit_results, main, render
from qnnstab.exper import ResultTable
from qnnstab.train import StepSchedule


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_args_is_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == 2 and "usage" in err


def test_unknown_command(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_bounds_matches_library(capsys):
    code, out, _ = run(capsys, "bounds", "--thm", "cor1a", "--alpha", "4", "--nu", "2", "--k", "16", "--onorm", "1", "--m", "64", "--eta", "1e-4", "--t", "200")
    assert code == 0
    lines = dict(line.split(" = ") for line in out.strip().splitlines())
    q = bounds.BoundQuery(alpha=4, nu=2, big_m=4, K=16, Kg=16, o_norm=1, m=64, T=200, schedule=StepSchedule.constant(1e-4))
    assert float(lines["epsilon"]) == bounds.stability_const(q)
    assert lines["k"] == "16" and lines["eta"] == "0.0001"


def test_bounds_query_file(tmp_path, capsys):
    (tmp_path / "q.txt").write_text("# desk scale\nk = 8\nkg = 11\nm = 64\nt = 200\nc = 0.01\np = 0.05\n")
    code, out, _ = run(capsys, "bounds", "--thm", "cor2b", "--query", str(tmp_path / "q.txt"))
    assert code == 0 and "gen_bound_indicative" in out
    code, out, _ = run(capsys, "bounds", "--thm", "cor2b", "--query", str(tmp_path / "q.txt"), "--p", "0.1")
    assert "p = 0.1" in out


def test_bounds_thm3_and_lem3(tmp_path, capsys):
    (tmp_path / "trace.txt").write_text("0.5\n0.4\n0.3\n")
    code, out, _ = run(capsys, "bounds", "--thm", "thm3", "--k", "2", "--m", "10", "--t", "3", "--eta", "0.01", "--sigma", "0.2", "--trace", str(tmp_path / "trace.txt"))
    assert code == 0 and "onavg_bound" in out
    assert run(capsys, "bounds", "--thm", "lem3", "--k", "2", "--m", "10", "--t", "3", "--eta", "0.01", "--risk0", "1", "--risk-min", "0")[0] == 0


def test_bounds_missing_constants(capsys):
    code, _, err = run(capsys, "bounds", "--thm", "cor1a", "--k", "2")
    assert code == 2 and "--m" in err
    assert run(capsys, "bounds", "--thm", "cor1a", "--k", "2", "--m", "4", "--t", "3", "--c", "1")[0] == 2


def test_verify_exit_codes(capsys):
    code, out, err = run(capsys, "verify", "--cases", "40", "--seed", "7")
    assert code == 0 and out.startswith("property,cases,violations,worst_slack,status")
    assert "config" in err and "seed 7" in err
    code, out, _ = run(capsys, "verify", "--cases", "300", "--seed", "7", "--kappa-scale", "0.5")
    assert code == 1 and "FAIL" in out


def test_sweep_schema_and_determinism(tmp_path, capsys):
    args = ["sweep", "f3", "--grid", "0.01,0.1", "--replicates", "2", "--T", "3", "--m-train", "8", "--m-test", "8", "--layers", "1"]
    assert run(capsys, *args, "--out", str(tmp_path / "a.csv"))[0] == 0
    assert run(capsys, *args, "--out", str(tmp_path / "b.csv"))[0] == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.decode().splitlines()[0] == "p,replicate,train_loss,test_loss,gap_loss,gap_err01"


def test_config_file_and_flag_precedence(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("layers = 1\nT = 2\nm_train = 6\nm_test = 6\nseed = 3\n")
    _, _, err_file = run(capsys, "train", "--config", str(tmp_path / "c.txt"))
    _, _, err_flag = run(capsys, "train", "--config", str(tmp_path / "c.txt"), "--seed", "4")
    assert "seed 3" in err_file and "seed 4" in err_flag
    code, _, err = run(capsys, "train", "--config", str(tmp_path / "c.txt"), "--p", "3")
    assert code == 2 and "noise" in err


def test_train_emits_trajectory(capsys):
    code, out, _ = run(capsys, "train", "--layers", "1", "--T", "4", "--m-train", "6", "--m-test", "6", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["columns"] == ["t", "index", "step_size", "train_risk"] and len(data["records"]) == 5


def test_stability_command(capsys):
    code, out, err = run(capsys, "stability", "--seeds", "3", "--T", "5")
    assert code == 0 and out.startswith("t,delta_mean,delta_se,recursion_ok")
    assert "thm1_bound" in err


def test_data_prepare(tmp_path, capsys):
    code, _, _ = run(capsys, "data", "prepare", "--m-train", "4", "--m-test", "2", "--out", str(tmp_path / "d.csv"))
    assert code == 0
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 7
    assert run(capsys, "data")[0] == 2


def test_emit_results(tmp_path, capsys):
    empty = ResultTable(("a", "b"))
    assert render(empty) == "a,b\n"
    table = ResultTable(("x", "ok"), ((1 / 3, True),))
    assert render(table) == "x,ok\n0.333333333333,true\n"
    emit_results(table, "json", tmp_path / "t.json")
    assert json.loads((tmp_path / "t.json").read_text())["records"] == [{"x": 0.333333333333, "ok": True}]
    with pytest.raises(OSError):
        emit_results(table, "csv", tmp_path / "missing" / "t.csv")
