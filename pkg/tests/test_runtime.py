import random
import threading
from collections import Counter

import pytest

from ringivm.core.relation import Relation
from ringivm.core.schema import Schema
from ringivm.errors import (
    CounterUnderflow, MissingRelation, ModeMismatch, NotUpdatable, SchemaMismatch, UnknownRelation,
)
from ringivm.planner.order import VariableOrder
from ringivm.planner.plan import FACTORIZED, compile_plan
from ringivm.planner.query import QuerySpec, RelationSpec
from ringivm.rings.degree import DegreeMRing
from ringivm.rings.numeric import count_catalog
from ringivm.rings.relational import RelationalRing
from ringivm.runtime.engine import Engine
from ringivm.runtime.enumerate import enumerate_factorized
from ringivm.runtime.indicators import IndicatorCounter, transitions
from ringivm.runtime.oracle import divergences, evaluate_oracle
from ringivm.runtime.updates import UpdateDelta
from support import (
    RUNNING_ROWS, RUNNING_SCHEMAS, Z, flat_join, running_db, running_order, running_query,
)

FIG_2D = {
    "V@B_R": {("a1",): 2, ("a2",): 1, ("a3",): 1},
    "V@D_T": {("c1",): 1, ("c2",): 2, ("c3",): 1},
    "V@E_S": {("a1", "c1"): 2, ("a1", "c2"): 1, ("a2", "c2"): 1},
    "V@C_ST": {("a1",): 4, ("a2",): 2},
    "V@A_RST": {(): 10},
}


def running_engine(**kw):
    plan = compile_plan(running_query(**kw), running_order())
    return Engine(plan, running_db())


def delta(rel, rows, payloads=None):
    return UpdateDelta.rows(rel, RUNNING_SCHEMAS[rel], Z, rows, payloads)


def two_tuple_t_delta():
    return delta("T", [("c1", "d1"), ("c2", "d2")], [-1, 3])


def _assert_sound(engine, tol=0.0):
    assert divergences(engine.plan, engine.views(), engine.base(), tol) == []


# -- initialize ----------------------------------------------------------------


def test_initialize_matches_running_views():
    e = running_engine()
    assert {k: v.to_dict() for k, v in e.views().items()} == FIG_2D
    assert all(v == 0 for v in e.read_counters().values())


def test_initialize_empty_database():
    plan = compile_plan(running_query(), running_order())
    e = Engine(plan, {r: Relation.empty(s, Z) for r, s in RUNNING_SCHEMAS.items()})
    assert len(e.root()) == 0
    assert all(len(v) == 0 for v in e.views().values())


def test_initialize_degree_ring_count_component():
    code = {f"{p}{i}": i for p in "abcde" for i in range(1, 5)}
    schemas = {r: Schema((v, "int") for v in s.variables) for r, s in RUNNING_SCHEMAS.items()}
    db_rows = {r: [tuple(code[x] for x in row) for row in rows] for r, rows in RUNNING_ROWS.items()}
    ring = DegreeMRing(variables="ABCDE")
    q = QuerySpec.build(schemas, (), ring, ring.catalog(list("ABCDE")))
    plan = compile_plan(q, running_order())
    db = {r: Relation.from_rows(schemas[r], ring, rows) for r, rows in db_rows.items()}
    assert Engine(plan, db).root()[()].c == 10


def test_initialize_errors():
    plan = compile_plan(running_query(), running_order())
    db = running_db()
    del db["T"]
    with pytest.raises(MissingRelation):
        Engine(plan, db)
    db = running_db()
    db["T"] = Relation.empty(Schema.of("C:str", "X:str"), Z)
    with pytest.raises(SchemaMismatch):
        Engine(plan, db)


# -- updates -------------------------------------------------------------------


def test_two_tuple_t_update():
    e = running_engine()
    dt = e.plan.delta("T")
    # delta values along the path, read off before applying
    from ringivm.planner.viewtree import compute_node

    cur = two_tuple_t_delta().listing
    seen = []
    for step in dt.steps:
        ops = [cur if i == step.changed else e.stores[c.id] for i, c in enumerate(step.node.children)]
        cur = compute_node(step.node, ops, e.tree, e.ring)
        seen.append(cur.to_dict())
    assert seen == [{("c1",): -1, ("c2",): 3}, {("a1",): 1, ("a2",): 3}, {(): 5}]
    assert e.apply_update(two_tuple_t_delta()) is True
    assert e.root().to_dict() == {(): 15}
    _assert_sound(e)


def test_empty_delta_changes_nothing():
    e = running_engine()
    before = e.views()
    assert e.apply_update(UpdateDelta("T", Relation.empty(RUNNING_SCHEMAS["T"], Z))) is False
    assert e.views() == before
    assert all(v == 0 for v in e.read_counters().values())


def test_batch_equals_sequential_updates():
    ups = [delta("R", [("a1", "b9")]), delta("R", [("a2", "b9")]), delta("T", [("c2", "d9")])]
    a, b = running_engine(), running_engine()
    a.apply_batch(ups)
    for u in ups:
        b.apply_update(u)
    assert a.views() == b.views()
    _assert_sound(a)


def test_insert_then_delete_restores_state():
    e = running_engine()
    before = e.views()
    d = delta("S", [("a1", "c2", "e7"), ("a3", "c3", "e1")], [2, 1])
    e.apply_batch([d, d.negate()])
    assert e.views() == before
    e.apply_update(d)
    e.apply_update(d.negate())
    assert e.views() == before


def test_random_interleavings_match_oracle():
    rnd = random.Random(8)
    e = running_engine()
    vals = {v: [f"{v.lower()}{i}" for i in range(1, 5)] for v in "ABCDE"}
    for _ in range(30):
        batch = []
        for _ in range(rnd.randint(1, 4)):
            r = rnd.choice("RST")
            row = tuple(rnd.choice(vals[v]) for v in RUNNING_SCHEMAS[r].variables)
            batch.append(delta(r, [row], [rnd.choice([-1, 1, 2])]))
        e.apply_batch(batch)
        _assert_sound(e)


def test_not_updatable_and_unknown_relations():
    e = running_engine(updatable=["T"])
    with pytest.raises(NotUpdatable):
        e.apply_update(delta("S", [("a1", "c1", "e1")]))
    with pytest.raises(UnknownRelation):
        e.apply_update(UpdateDelta("X", Relation.empty(Schema.of("A:str"), Z)))
    with pytest.raises(SchemaMismatch):
        e.apply_update(UpdateDelta("T", Relation.empty(Schema.of("C:str"), Z)))


def test_only_needed_views_are_stored():
    e = running_engine(updatable=["T"])
    assert set(e.views()) == {"V@A_RST", "V@E_S", "V@B_R"}
    e.apply_update(two_tuple_t_delta())
    assert e.root().to_dict() == {(): 15}


# -- indicators ----------------------------------------------------------------


def test_indicator_counter_two_step_deletion():
    s = Schema.of("A:str", "B:str")
    base = {("a1", "b1"): 1, ("a1", "b2"): 2, ("a2", "b3"): 3}
    c = IndicatorCounter("I[A]R", "R", s, ["A"], Z)
    c.build(base)
    assert c.view().to_dict() == {("a1",): 1, ("a2",): 1}
    d1 = Relation(s, Z, {("a1", "b2"): -2})
    out = c.maintain(base, d1)
    assert out.to_dict() == {}
    del base[("a1", "b2")]
    d2 = Relation(s, Z, {("a1", "b1"): -1})
    assert c.maintain(base, d2).to_dict() == {("a1",): -1}
    del base[("a1", "b1")]
    d3 = Relation(s, Z, {("a9", "b1"): 1})
    assert c.maintain(base, d3).to_dict() == {("a9",): 1}


def test_indicator_underflow():
    s = Schema.of("A:str", "B:str")
    c = IndicatorCounter("I[A]R", "R", s, ["A"], Z)
    c.build({})
    with pytest.raises(CounterUnderflow):
        c.apply([(("a1", "b1"), True, False)])


def test_indicator_emission_bounded_by_input():
    rnd = random.Random(3)
    s = Schema.of("A:int", "B:int")
    base = {}
    c = IndicatorCounter("I[A]R", "R", s, ["A"], Z)
    c.build(base)
    for _ in range(200):
        d = Relation(s, Z, {(rnd.randrange(4), rnd.randrange(4)): rnd.choice([-1, 1]) for _ in range(3)})
        out = c.apply(transitions(base, d))
        assert len(out) <= len(d)
        for k, p in d.items():
            v = base.get(k, 0) + p
            if v:
                base[k] = v
            else:
                base.pop(k, None)
        assert set(c.counts) == {(k[0],) for k in base}


def _triangle_engine(rnd, n=20):
    schemas = {"R": Schema.of("A:int", "B:int"), "S": Schema.of("B:int", "C:int"),
               "T": Schema.of("A:int", "C:int")}
    q = QuerySpec.build(schemas, (), Z, count_catalog(["A", "B", "C"], Z))
    plan = compile_plan(q, VariableOrder.parse("A(B(C))", {"R": "B"}))
    db = {r: Relation(s, Z, {tuple(rnd.randrange(5) for _ in s.variables): 1 for _ in range(n)})
          for r, s in schemas.items()}
    return Engine(plan, db), schemas


def test_triangle_updates_with_indicators():
    rnd = random.Random(6)
    e, schemas = _triangle_engine(rnd)
    for _ in range(60):
        r = rnd.choice("RST")
        rows = {tuple(rnd.randrange(5) for _ in range(2)): rnd.choice([-1, 1]) for _ in range(2)}
        e.apply_update(UpdateDelta(r, Relation(schemas[r], Z, rows)))
        _assert_sound(e)
    assert set(e.indicator_counters) == {"I[A,B]R"}
    assert e.stores["I[A,B]R"].snapshot() == e.indicator_counters["I[A,B]R"].view()


def test_engine_maintain_indicator_does_not_touch_views():
    e, schemas = _triangle_engine(random.Random(1))
    before = e.views()
    k = next(iter(e.base()["R"]))
    out = e.maintain_indicator("I[A,B]R", Relation(schemas["R"], Z, {k: -e.base()["R"][k]}))
    assert out.to_dict() == {k: -1}
    assert e.views() == before


def test_strict_deletes_roll_back_the_batch():
    plan = compile_plan(running_query(), running_order())
    e = Engine(plan, running_db(), strict_deletes=True)
    before, base = e.views(), e.base()
    ok = delta("T", [("c3", "d9")])
    bad = delta("R", [("a1", "b1")], [-2])
    with pytest.raises(CounterUnderflow):
        e.apply_batch([ok, bad])
    assert e.views() == before and e.base() == base
    # lenient engines accept negative multiplicities
    lenient = running_engine()
    lenient.apply_update(bad)
    _assert_sound(lenient)


# -- self-joins ----------------------------------------------------------------


def test_self_join_two_paths():
    rnd = random.Random(2)
    src = Schema.of("X:int", "Y:int")
    rels = [
        RelationSpec("E1", Schema.of("A:int", "B:int"), "E", (("X", "A"), ("Y", "B"))),
        RelationSpec("E2", Schema.of("B:int", "C:int"), "E", (("X", "B"), ("Y", "C"))),
    ]
    q = QuerySpec.build(rels, (), Z, count_catalog(["A", "B", "C"], Z))
    plan = compile_plan(q, VariableOrder.parse("B(A, C)"))
    edges = {(rnd.randrange(5), rnd.randrange(5)): 1 for _ in range(12)}
    e = Engine(plan, {"E": Relation(src, Z, edges)})

    def paths(es):
        return sum(es[a] * es[b] for a in es for b in es if a[1] == b[0])

    assert e.root()[()] == paths(edges)
    for _ in range(20):
        k = (rnd.randrange(5), rnd.randrange(5))
        m = rnd.choice([-1, 1]) if k in edges else 1
        e.apply_update(UpdateDelta("E", Relation(src, Z, {k: m})))
        edges[k] = edges.get(k, 0) + m
        if not edges[k]:
            del edges[k]
        assert (e.root().get(()) or 0) == paths(edges)
        assert e.sources()["E"].to_dict() == edges
        _assert_sound(e)


# -- factorized updates --------------------------------------------------------


def test_factorized_update_matches_listing_update():
    rnd = random.Random(5)
    for _ in range(20):
        a = Relation(Schema.of("A:str"), Z, {(f"a{rnd.randint(1, 3)}",): rnd.choice([1, 2, -1])})
        c = Relation(Schema.of("C:str"), Z, {(f"c{rnd.randint(1, 3)}",): 1, ("c2",): 1})
        ee = Relation(Schema.of("E:str"), Z, {(f"e{rnd.randint(1, 5)}",): 1})
        fact = UpdateDelta.factorized("S", [a, c, ee], [a, c, ee])
        lst = UpdateDelta("S", fact.expand(Z))
        x, y = running_engine(), running_engine()
        x.apply_update(fact)
        y.apply_update(lst)
        assert x.views() == y.views()
        assert x.base() == y.base()
        _assert_sound(x)


def test_relational_listing_and_factorized_modes():
    ring = RelationalRing()
    q = running_query(ring=ring, free=tuple("ABCD"), liftings={})
    db = running_db(ring)
    listing = Engine(compile_plan(q, running_order()), db)
    root = listing.root()[()]
    assert sorted(root.to_dict().values()) == [1, 1, 1, 1, 1, 1, 2, 2]
    fact = Engine(compile_plan(q, running_order(), mode=FACTORIZED), db)
    assert fact.root()[()].to_dict() == {("a1",): 8, ("a2",): 2}
    assert fact.view("V@C_ST")[("a1",)].to_dict() == {("c1",): 2, ("c2",): 2}
    assert dict(enumerate_factorized(fact)) == root.to_dict()
    with pytest.raises(ModeMismatch):
        list(enumerate_factorized(listing))


def test_factorized_enumeration_tracks_updates():
    rnd = random.Random(12)
    ring = RelationalRing()
    q = running_query(ring=ring, free=tuple("ABCD"), liftings={})
    lst = Engine(compile_plan(q, running_order()), running_db(ring))
    fac = Engine(compile_plan(q, running_order(), mode=FACTORIZED), running_db(ring))
    vals = {v: [f"{v.lower()}{i}" for i in range(1, 4)] for v in "ABCDE"}
    # deletes only remove present tuples: summed payload multiplicities
    # could otherwise cancel and hide non-zero result tuples
    present = {r: set(rows) for r, rows in RUNNING_ROWS.items()}
    for _ in range(40):
        r = rnd.choice("RST")
        if present[r] and rnd.random() < 0.4:
            row = rnd.choice(sorted(present[r]))
            present[r].discard(row)
            m = -1
        else:
            row = tuple(rnd.choice(vals[v]) for v in RUNNING_SCHEMAS[r].variables)
            if row in present[r]:
                continue
            present[r].add(row)
            m = 1
        d = UpdateDelta.rows(r, RUNNING_SCHEMAS[r], ring, [row], [ring.from_int(m)])
        lst.apply_update(d)
        fac.apply_update(d)
        root = lst.root().get(())
        expected = root.to_dict() if root is not None else {}
        got = Counter()
        for t, m in enumerate_factorized(fac):
            got[t] += m
        assert {k: v for k, v in got.items() if v} == expected
        _assert_sound(fac)


def test_single_relation_enumeration():
    ring = RelationalRing()
    s = Schema.of("A:int", "B:int")
    q = QuerySpec.build({"R": s}, ("A",), ring)
    plan = compile_plan(q, VariableOrder.parse("A(B)"), mode=FACTORIZED)
    data = {(1, 1): 1, (1, 2): 1, (2, 5): 1}
    e = Engine(plan, {"R": Relation(s, ring, {k: ring.one for k in data})})
    assert dict(enumerate_factorized(e)) == {(1,): 2, (2,): 1}


# -- counters ------------------------------------------------------------------


def _scaled_running(n):
    schemas = {r: Schema((v, "int") for v in s.variables) for r, s in RUNNING_SCHEMAS.items()}
    db = {
        "R": Relation(schemas["R"], Z, {(i % 10, i): 1 for i in range(n)}),
        "S": Relation(schemas["S"], Z, {(i, i, 0): 1 for i in range(10)}),
        "T": Relation(schemas["T"], Z, {(i % 10, i): 1 for i in range(n)}),
    }
    q = QuerySpec.build(schemas, (), Z, count_catalog(list("ABCDE"), Z))
    return Engine(compile_plan(q, running_order()), db), schemas


def test_single_s_update_cost_is_constant():
    costs = []
    for n in (100, 1000, 10000):
        e, schemas = _scaled_running(n)
        e.apply_update(UpdateDelta("S", Relation(schemas["S"], Z, {(3, 3, 7): 1})))
        costs.append(e.read_counters()["payload_mults"])
    assert max(costs) / min(costs) <= 1.5


def test_single_t_update_cost_grows_with_s():
    schemas = {r: Schema((v, "int") for v in s.variables) for r, s in RUNNING_SCHEMAS.items()}
    q = QuerySpec.build(schemas, (), Z, count_catalog(list("ABCDE"), Z))
    costs = []
    for n in (50, 100, 200, 400):
        db = {
            "R": Relation(schemas["R"], Z, {(a, 0): 1 for a in range(n)}),
            "S": Relation(schemas["S"], Z, {(a, 0, 0): 1 for a in range(n)}),
            "T": Relation(schemas["T"], Z, {(0, 0): 1}),
        }
        e = Engine(compile_plan(q, running_order()), db)
        e.apply_update(UpdateDelta("T", Relation(schemas["T"], Z, {(0, 9): 1})))
        costs.append(e.read_counters()["entries_touched"])
    ratios = [b / a for a, b in zip(costs, costs[1:])]
    assert all(1.6 <= r <= 2.4 for r in ratios), costs


def test_counters_reset():
    e = running_engine()
    e.apply_update(two_tuple_t_delta())
    assert e.read_counters()["payload_mults"] > 0
    e.reset_counters()
    assert all(v == 0 for v in e.read_counters().values())


# -- oracle and concurrency ----------------------------------------------------


def test_oracle_modes_agree():
    e = running_engine()
    e.apply_update(two_tuple_t_delta())
    nested = evaluate_oracle(e.plan, e.base(), views=True)
    bottom = evaluate_oracle(e.plan, e.base(), views=True, mode="bottom-up")
    assert nested == bottom == e.views()


def test_oracle_against_flat_join():
    e = running_engine()
    tables = {r: (RUNNING_SCHEMAS[r].variables, RUNNING_ROWS[r]) for r in "RST"}
    assert evaluate_oracle(e.plan, e.base())[()] == len(flat_join(tables)[1])


def test_readers_wait_for_writer():
    e = running_engine()
    results = []
    with e.lock.write():
        t = threading.Thread(target=lambda: results.append(e.root().to_dict()))
        t.start()
        t.join(0.1)
        assert t.is_alive() and not results
        e.stores["V@A_RST"].add((), 1)
    t.join(2)
    assert results == [{(): 11}]


def test_concurrent_readers():
    e = running_engine()
    out = []
    with e.lock.read():
        t = threading.Thread(target=lambda: out.append(e.root().to_dict()))
        t.start()
        t.join(2)
    assert out == [{(): 10}]
