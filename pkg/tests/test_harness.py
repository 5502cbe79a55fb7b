import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ringivm.core.relation import Relation
from ringivm.core.schema import Schema
from ringivm.errors import (
    DimensionMismatch, Divergence, EmptyDataset, OracleDivergence, ParseError, ValidationError,
)
from ringivm.harness.cli import main
from ringivm.harness.config import MatrixChainConfig, load_config, parse_config
from ringivm.harness.mcm import (
    chain_plan, matrix_relation, rank_update, recompute_cost, result_matrix, run_matrix_chain,
)
from ringivm.harness.metrics import Metrics, report_metrics
from ringivm.harness.regression import train_regression
from ringivm.harness.stream import build_plan, dump_views, run_stream
from ringivm.planner.order import VariableOrder
from ringivm.planner.plan import compile_plan
from ringivm.planner.query import QuerySpec
from ringivm.rings.degree import DegreeMRing
from ringivm.rings.numeric import RealRing
from ringivm.runtime.engine import Engine

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).parent / "golden"

RUNNING_TEXT = (CONFIGS / "running" / "count.ini").read_text()


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def _running_config(tmp_path, stream_text=None, extra=""):
    for f in ("R.csv", "S.csv", "T.csv"):
        (tmp_path / f).write_text((CONFIGS / "running" / f).read_text())
    text = RUNNING_TEXT.replace("files = delta_T.csv", "files = events.csv") + extra
    _write(tmp_path, "events.csv", stream_text if stream_text is not None else "relation,multiplicity,C,D\n")
    return _write(tmp_path, "job.ini", text)


# -- configs -------------------------------------------------------------------


def test_running_config_plan_matches_golden():
    cfg = load_config(CONFIGS / "running" / "count.ini")
    assert build_plan(cfg).dump() == (GOLDEN / "running_plan.txt").read_text()
    assert cfg.batch_size == 1 and cfg.check_every == 10


def test_sum_ring_needs_liftings():
    text = """
[query]
ring = sum
sum = B
[order]
tree = A(B)
[relation R]
schema = A:int, B:int
"""
    with pytest.raises(ValidationError, match="no lifting"):
        parse_config(text)
    cfg = parse_config(text.replace("sum = B", "sum = B\n[lifting]\nA = one"))
    assert cfg.query.liftings["B"].label == "value"


def test_free_variable_must_exist():
    text = "[query]\nring = count\nfree = Z\n[order]\ntree = A\n[relation R]\nschema = A\n"
    with pytest.raises(ValidationError, match=r"line 3: .*\['Z'\]"):
        parse_config(text)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_config("ring = count\n")
    assert exc.value.line == 1
    with pytest.raises(ParseError) as exc:
        parse_config("[query]\nring = count\n[query]\n")
    assert exc.value.line == 3
    with pytest.raises(ValidationError, match="line 2"):
        parse_config("[query]\nring = tropical\n")


def test_bad_order_and_placement():
    base = "[query]\nring = count\n[relation R]\nschema = A, B\n[order]\n"
    with pytest.raises(ValidationError, match="missing from the order"):
        parse_config(base + "tree = A\n")
    with pytest.raises(ValidationError, match="unknown relation"):
        parse_config(base + "tree = A(B)\nplace.Q = B\n")
    cfg = parse_config(base + "A = -\nB = A\n")
    assert cfg.order.to_text() == "A(B)"


def test_mcm_only_config():
    cfg = load_config(CONFIGS / "mcm" / "mcm.ini")
    assert cfg.query is None and cfg.mcm.p == 8
    with pytest.raises(ValidationError):
        parse_config("[mcm]\nlength = 1\n")


def test_self_join_config(tmp_path):
    _write(tmp_path, "E.csv", "X,Y\n1,2\n2,3\n2,4\n")
    text = """
[query]
ring = count
[order]
tree = B(A, C)
[relation E1]
schema = A:int, B:int
source = E
rename = X:A, Y:B
data = E.csv
[relation E2]
schema = B:int, C:int
source = E
rename = X:B, Y:C
"""
    cfg = parse_config(text, tmp_path / "job.ini")
    m, e = run_stream(cfg)
    assert e.root().to_dict() == {(): 2}


# -- streams -------------------------------------------------------------------


def test_run_stream_two_t_events(tmp_path):
    cfg = load_config(_running_config(tmp_path, "relation,multiplicity,C,D\nT,-1,c1,d1\nT,3,c2,d2\n"))
    m, e = run_stream(cfg, check=True)
    assert e.root().to_dict() == {(): 15}
    assert m.tuples_processed == 2 and m.batches == 2 and m.oracle_checks == 1


def test_empty_stream_keeps_initial_root(tmp_path):
    cfg = load_config(_running_config(tmp_path))
    m, e = run_stream(cfg, check=True)
    assert e.root().to_dict() == {(): 10}
    assert m.throughput == 0 and m.view_sizes == e.view_entry_counts()


def test_batch_size_does_not_change_results():
    cfg = load_config(CONFIGS / "triangle" / "triangle.ini")
    m1, e1 = run_stream(cfg, batch_size=1, check=True)
    m2, e2 = run_stream(cfg, batch_size=1000, check=True)
    assert e1.views() == e2.views()
    assert m2.batches == 1 and m1.batches == m1.tuples_processed


def test_stream_parse_errors(tmp_path):
    cfg = load_config(_running_config(tmp_path, "relation,multiplicity,C,D\nT,0,c1,d1\n"))
    with pytest.raises(ParseError) as exc:
        run_stream(cfg)
    assert exc.value.line == 2
    cfg = load_config(_running_config(tmp_path, "relation,multiplicity,C,D\nT,1,c1,d1\nQ,1,x\n"))
    with pytest.raises(ParseError, match="unknown relation"):
        run_stream(cfg)


def test_oracle_divergence_detected(tmp_path):
    cfg = load_config(_running_config(tmp_path, "relation,multiplicity,C,D\nT,1,c1,d9\n"))
    _, e = run_stream(cfg)
    e.stores["V@B_R"].add(("a1",), 5)  # corrupt a stored view
    with pytest.raises(OracleDivergence):
        run_stream(cfg, check=True, engine=e)


def test_factorized_stream_events(tmp_path):
    _write(tmp_path, "fa.csv", "A,payload\na1,1\n")
    _write(tmp_path, "fc.csv", "C,payload\nc1,1\nc2,2\n")
    _write(tmp_path, "fe.csv", "E,payload\ne9,1\n")
    stream = "relation,multiplicity,A,C,E\nS,@t1\nS,1,a2,c2,e5\n"
    path = _running_config(tmp_path, stream, "\n[factorized]\nt1 = fa.csv, fc.csv, fe.csv\n")
    path.write_text(path.read_text())
    cfg = load_config(path)
    _, e = run_stream(cfg, check=True)
    # new S tuples: (a1,c1,e9), (a1,c2,e9)x2, (a2,c2,e5)
    assert e.root().to_dict() == {(): 10 + 2 * 1 + 2 * 2 * 2 + 1 * 2}


def test_bundled_configs_pass_oracle_check():
    for name in ("running/count.ini", "running/listing.ini", "running/factorized.ini",
                 "triangle/triangle.ini", "regression/regression.ini"):
        m, _ = run_stream(load_config(CONFIGS / name), check=True)
        assert m.divergences == 0 and m.oracle_checks >= 1


def test_dump_views(tmp_path):
    _, e = run_stream(load_config(CONFIGS / "running" / "count.ini"))
    files = dump_views(e, tmp_path / "views")
    assert sorted(p.name for p in files) == sorted(f"{v}.csv" for v in e.views())
    root = (tmp_path / "views" / "V@A_RST.csv").read_text()
    assert root == "payload\n15\n"


# -- metrics -------------------------------------------------------------------


def test_metrics_csv_header_and_order():
    m = Metrics(tuples_processed=10, wall_seconds=2.0)
    text = report_metrics(m, "csv")
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["metric", "value"]
    assert [r[0] for r in rows[1:5]] == ["tuples_processed", "batches", "wall_seconds", "throughput"]
    assert float(rows[4][1]) == pytest.approx(5.0)
    assert report_metrics(m, "csv") == text
    assert "throughput" in report_metrics(m)


def test_throughput_definition():
    m = Metrics(tuples_processed=7, wall_seconds=0.3)
    assert m.throughput == pytest.approx(7 / 0.3, rel=1e-12)
    assert Metrics().throughput == 0


# -- regression ----------------------------------------------------------------


def _degree_root(rows, variables):
    ring = DegreeMRing(variables=variables)
    s = Schema((v, "float") for v in variables)
    q = QuerySpec.build({"D": s}, (), ring, ring.catalog(variables))
    plan = compile_plan(q, VariableOrder.chain(variables))
    cols = sorted(variables)
    data = [tuple(float(r[variables.index(c)]) for c in cols) for r in rows]
    e = Engine(plan, {"D": Relation.from_rows(s, ring, data)})
    return e.root()[()], ring


def _lstsq(X, y):
    A = np.column_stack([np.ones(len(X)), X])
    return np.linalg.lstsq(A, y, rcond=None)[0]


def test_regression_recovers_line():
    rows = [(x, 2 * x + 1) for x in range(1, 101)]
    payload, ring = _degree_root(rows, ["X", "Y"])
    theta = train_regression(payload, ring.index, ["X"], "Y")
    ref = _lstsq(np.array([[x] for x, _ in rows], float), np.array([y for _, y in rows], float))
    assert np.max(np.abs(theta - ref)) <= 1e-4
    assert np.max(np.abs(theta - [1, 2])) <= 1e-4


def test_regression_feature_equal_to_label():
    rows = [(x, 3 * x - 2) for x in range(10)]
    payload, ring = _degree_root([(y, y) for _, y in rows], ["F", "Y"])
    theta = train_regression(payload, ring.index, ["F"], "Y", alpha=0.002, iterations=2_000_000)
    assert abs(theta[1] - 1) <= 1e-4 and abs(theta[0]) <= 1e-3


def test_regression_restriction_matches_fresh_plan():
    rng = np.random.default_rng(0)
    rows = [(a, b, 0.5 * a - b + 3 + 0.01 * n) for a, b, n in rng.normal(size=(30, 3))]
    full, ring = _degree_root(rows, ["A", "B", "Y"])
    sub, sub_ring = _degree_root([(a, y) for a, _, y in rows], ["A", "Y"])
    t_full = train_regression(full, ring.index, ["A"], "Y")
    t_sub = train_regression(sub, sub_ring.index, ["A"], "Y")
    assert np.max(np.abs(t_full - t_sub)) <= 1e-9
    t_both = train_regression(full, ring.index, ["A", "B"], "Y")
    assert np.max(np.abs(t_both - _lstsq(np.array([r[:2] for r in rows]), np.array([r[2] for r in rows])))) <= 1e-4


def test_regression_errors():
    ring = DegreeMRing(variables=["X", "Y"])
    with pytest.raises(EmptyDataset):
        train_regression(ring.zero, ring.index, ["X"], "Y")
    payload, ring = _degree_root([(x, 2 * x) for x in range(1, 20)], ["X", "Y"])
    with pytest.raises(Divergence):
        train_regression(payload, ring.index, ["X"], "Y", alpha=10.0)
    with pytest.raises(ValidationError):
        train_regression(payload, ring.index, ["Y"], "Y")


def test_regression_config():
    cfg = load_config(CONFIGS / "regression" / "regression.ini")
    _, e = run_stream(cfg)
    r = cfg.regression
    theta = train_regression(e.root()[()], cfg.ring.index, r.features, r.label)
    assert np.allclose(theta, [1, 2], atol=1e-4)


# -- matrix chain --------------------------------------------------------------


def _chain_engine(mats):
    ring = RealRing()
    plan = chain_plan(len(mats), ring)
    db = {f"A{k}": matrix_relation(k, M, ring) for k, M in enumerate(mats, start=1)}
    return Engine(plan, db), ring


def test_identity_chain_rank1_update():
    I = np.eye(2)
    e, ring = _chain_engine([I, I, I])
    before = result_matrix(e.root(), 2, 2, 3)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    e.apply_update(rank_update(2, [e1], [e2], ring))
    after = result_matrix(e.root(), 2, 2, 3)
    assert np.allclose(after - before, np.outer(e1, e2), atol=1e-12)


def test_random_chain_row_update():
    rng = np.random.default_rng(4)
    mats = [rng.standard_normal((8, 8)) for _ in range(3)]
    e, ring = _chain_engine(mats)
    u = np.zeros(8)
    u[3] = 1.0
    v = rng.standard_normal(8)
    e.apply_update(rank_update(2, [u], [v], ring))
    A2 = mats[1] + np.outer(u, v)
    expected = mats[0] @ A2 @ mats[2]
    assert np.max(np.abs(result_matrix(e.root(), 8, 8, 3) - expected)) <= 1e-9


def test_rank_update_is_cheaper_than_recompute():
    rng = np.random.default_rng(1)
    ratios = []
    for p in (4, 8, 16):
        mats = [rng.standard_normal((p, p)) for _ in range(3)]
        e, ring = _chain_engine(mats)
        e.apply_update(rank_update(2, [rng.standard_normal(p)], [rng.standard_normal(p)], ring))
        upd = e.read_counters()["payload_mults"]
        full = recompute_cost(e.plan, e.base())["payload_mults"]
        ratios.append(full / upd)
    assert ratios[0] < ratios[1] < ratios[2]


def test_run_matrix_chain_preset_and_files(tmp_path):
    run = run_matrix_chain(load_config(CONFIGS / "mcm" / "mcm.ini").mcm)
    assert run.max_error <= 1e-9
    for k in (1, 2):
        _write(tmp_path, f"m{k}.csv", "i,j,value\n0,0,1\n1,1,1\n0,1,2\n")
    _write(tmp_path, "u.csv", "i,value\n0,1\n")
    _write(tmp_path, "v.csv", "i,value\n1,1\n")
    cfg = MatrixChainConfig(p=2, length=2, updates=1, target=1,
                            matrices=[tmp_path / "m1.csv", tmp_path / "m2.csv"],
                            u=[tmp_path / "u.csv"], v=[tmp_path / "v.csv"])
    run = run_matrix_chain(cfg)
    assert np.allclose(run.result, np.array([[1, 3], [0, 1]]) @ np.array([[1, 2], [0, 1]]))


def test_matrix_chain_dimension_mismatch(tmp_path):
    _write(tmp_path, "a.csv", "i,j,value\n0,0,1\n")
    _write(tmp_path, "b.csv", "i,j,value\n0,0,1\n1,1,1\n")
    _write(tmp_path, "c.csv", "i,j,value\n0,0,1\n0,1,1\n")
    cfg = MatrixChainConfig(length=2, matrices=[tmp_path / "c.csv", tmp_path / "a.csv"])
    with pytest.raises(DimensionMismatch):
        run_matrix_chain(cfg)


# -- CLI -----------------------------------------------------------------------


def test_cli_plan_and_run(capsys, tmp_path):
    assert main(["plan", "--config", str(CONFIGS / "running" / "count.ini")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "running_plan.txt").read_text()
    out = tmp_path / "m.csv"
    assert main(["check", "--config", str(CONFIGS / "running" / "count.ini"), "--metrics-out", str(out),
                 "--dump-views", str(tmp_path / "v")]) == 0
    assert capsys.readouterr().out == "payload\n15\n"
    assert out.read_text().startswith("metric,value\n")
    assert (tmp_path / "v" / "V@A_RST.csv").exists()


def test_cli_train_and_mcm(capsys):
    assert main(["train", "--config", str(CONFIGS / "regression" / "regression.ini")]) == 0
    lines = dict(l.split(",") for l in capsys.readouterr().out.split())
    assert abs(float(lines["bias"]) - 1) < 1e-4 and abs(float(lines["X"]) - 2) < 1e-4
    assert main(["mcm", "--config", str(CONFIGS / "mcm" / "mcm.ini")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 8


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "bad.ini", "[query]\nring = nope\n")
    assert main(["plan", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(CONFIGS / "running" / "count.ini"), "--batch-size", "0"]) == 2
    missing = _running_config(tmp_path)
    (tmp_path / "events.csv").unlink()
    assert main(["run", "--config", str(missing)]) == 3
    assert main(["train", "--config", str(CONFIGS / "running" / "count.ini")]) == 2
    capsys.readouterr()


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    import ringivm.harness.stream as stream

    monkeypatch.setattr(stream, "check_engine", lambda engine, tol=1e-9: ["V@A_RST"])
    assert main(["check", "--config", str(CONFIGS / "running" / "count.ini")]) == 4


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ringivm", "plan", "--config",
                          str(CONFIGS / "running" / "count.ini")], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("plan\n")
