import csv
import json

import numpy as np
import pytest

from structinfer import NormSpec
from structinfer.cli import apply_overrides, dispatch, resolve_threads
from structinfer.solvers import Dataset


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 5))
    path = tmp_path / "data.csv"
    Dataset(X, X @ np.array([2.0, 1.0, 0, 0, 0]) + rng.standard_normal(30)).to_csv(path)
    return path


def write_config(tmp_path, **cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_normtool_eval(capsys):
    code, out, _ = run(capsys, "normtool", "eval", "--kind", "wedge", "--beta", "0,1")
    assert code == 0
    assert float(out) == pytest.approx(1.414214, abs=1e-6)
    assert out.strip() == f"{np.sqrt(2):.15g}"


def test_normtool_prox_dual_gauge(capsys):
    code, out, _ = run(capsys, "normtool", "prox", "--beta", "3,-0.5", "--t", "1")
    assert code == 0 and [float(v) for v in out.split(",")] == [2.0, 0.0]
    code, out, _ = run(capsys, "normtool", "dual", "--kind", "slope", "--weights", "1,0.5", "--z", "1,1")
    assert code == 0 and float(out) == pytest.approx(4 / 3)
    code, out, _ = run(capsys, "normtool", "gauge", "--kind", "wedge", "--beta", "1,-2,3")
    lines = out.splitlines()
    assert code == 0 and float(lines[0]) == pytest.approx(6.0)
    assert NormSpec.from_json(lines[1]) == NormSpec.l1(3)
    spec = NormSpec.generalized_lorentz(3, [0]).to_json()
    code, out, _ = run(capsys, "normtool", "eval", "--norm-json", spec, "--beta", "1,2,2")
    assert code == 0 and float(out) == pytest.approx(NormSpec.from_json(spec).evaluate([1, 2, 2]))


def test_usage_errors(capsys, tmp_path):
    for argv in (["simulate", "--config", str(tmp_path / "missing.json")], [], ["bogus"],
                 ["normtool", "eval"], ["fit"], ["fit", "--threads", "x"]):
        code, _, err = run(capsys, *argv)
        assert code == 1, argv
        assert err.startswith("structinfer: error code=1 kind=usage")
        assert err.count("\n") == 1


def test_data_errors(capsys, tmp_path, dataset):
    code, _, err = run(capsys, "normtool", "eval", "--beta", "1,a")
    assert code == 2 and "kind=data" in err
    cfg = write_config(tmp_path, norm="l1")
    code, _, err = run(capsys, "fit", "--data", str(dataset), "--config", cfg)
    assert code == 2 and "lambda" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1\n1,2\n3\n")
    code, _, _ = run(capsys, "fit", "--data", str(bad), "--set", "lambda=1")
    assert code == 2
    code, _, _ = run(capsys, "fit", "--data", str(dataset), "--set", "lambda=1", "--set", "norm=slope")
    assert code == 2


def test_fit_writes_json(capsys, tmp_path, dataset):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, norm="wedge", **{"lambda": 0.2})
    code, _, _ = run(capsys, "fit", "--data", str(dataset), "--config", cfg, "--out", str(out))
    assert code == 0
    rec = json.loads((out / "fit.json").read_text())
    assert len(rec["beta_hat"]) == 5 and rec["converged"]
    assert NormSpec.from_dict(rec["norm"]) == NormSpec.wedge(5)


def test_fit_nonconvergence_exit_code(capsys, tmp_path, dataset):
    code, _, _ = run(capsys, "fit", "--data", str(dataset), "--set", "lambda=0.01",
                     "--set", "solver.max_iter=2", "--out", str(tmp_path))
    assert code == 3
    assert not json.loads((tmp_path / "fit.json").read_text())["converged"]


def test_ci_and_desparsify(capsys, tmp_path, dataset):
    cfg = write_config(tmp_path, norm="l1", sets=[[0], [1, 2]], lambda_node=1.0, sigma=1.0,
                       **{"lambda": 0.1})
    code, _, _ = run(capsys, "ci", "--data", str(dataset), "--config", cfg, "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "regions.csv")))
    assert [r["kind"] for r in rows] == ["pointwise_interval", "group_ellipsoid"]
    assert float(rows[0]["halfwidth"]) > 0
    code, _, _ = run(capsys, "desparsify", "--data", str(dataset), "--config", cfg, "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "desparsified.csv")))
    assert rows[1]["J"] == "1;2" and rows[0]["sigma_mode"] == "known"


def test_overrides():
    cfg = apply_overrides({"a": 1, "solver": {"tol": 1}}, ["a=2", "solver.max_iter=5", "name=wedge"])
    assert cfg == {"a": 2, "solver": {"tol": 1, "max_iter": 5}, "name": "wedge"}


def test_threads_fallback(monkeypatch):
    monkeypatch.delenv("STRUCTINFER_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("STRUCTINFER_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    assert resolve_threads(0) >= 1


def test_simulate_and_compare(capsys, tmp_path):
    cfg = write_config(tmp_path, n=30, p=12, s0=3, r=3, lambda_main=0.1, lambda_node=1.0)
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / "s"), "--seed", "4")
    assert code == 0 and "coverage_active=" in out
    for name in ("results.csv", "raw_log.csv", "diagnostics.csv"):
        assert (tmp_path / "s" / name).exists()
    code, out, _ = run(capsys, "compare", "--config", cfg, "--out", str(tmp_path / "c"))
    assert code == 0 and "active_length_ratio=" in out
    rows = list(csv.DictReader(open(tmp_path / "c" / "results.csv")))
    assert {r["framework"] for r in rows} == {"gauge", "omega"}
    assert len(list(csv.DictReader(open(tmp_path / "c" / "comparison.csv")))) == 12
    first = (tmp_path / "c" / "raw_log.csv").read_bytes()
    run(capsys, "compare", "--config", cfg, "--out", str(tmp_path / "c"))
    assert (tmp_path / "c" / "raw_log.csv").read_bytes() == first


def test_simulate_locates_lambdas(capsys, tmp_path):
    cfg = write_config(tmp_path, n=30, p=12, s0=3, r=2, lambda_main="auto", lambda_node="auto",
                       lambda_main_base=1.0, lambda_node_base=2.0, r_pilot=2,
                       scenarios=[{"s0": 3}, {"s0": 4}])
    code, _, _ = run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path))
    assert code == 0
    sweep = list(csv.DictReader(open(tmp_path / "lambda_sweep.csv")))
    assert {r["s0"] for r in sweep} == {"3", "4"}
    code, _, err = run(capsys, "simulate", "--config", cfg, "--set", "lambda_main_base=null",
                       "--out", str(tmp_path))
    assert code == 2 and "lambda_main_base" in err
