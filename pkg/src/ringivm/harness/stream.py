"""Loading job data and replaying update streams."""

from __future__ import annotations

import csv
import time
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

from ringivm.core.csvio import read_relation, write_relation
from ringivm.core.relation import Relation
from ringivm.core.schema import parse_value
from ringivm.errors import OracleDivergence, ParseError, ValidationError
from ringivm.harness.config import JobConfig
from ringivm.harness.metrics import Metrics
from ringivm.planner.plan import Plan, compile_plan
from ringivm.runtime.engine import Engine
from ringivm.runtime.oracle import divergences
from ringivm.runtime.updates import UpdateDelta


@dataclass
class StreamEvent:
    relation: str
    multiplicity: object  # number, or "@term" for a factorized update
    values: tuple
    line: int


def build_plan(cfg: JobConfig) -> Plan:
    return compile_plan(cfg.query, cfg.order, mode=cfg.mode, indicators=cfg.indicators)


def load_database(cfg: JobConfig) -> dict[str, Relation]:
    """Initial contents of every source relation (empty when no data file is given)."""
    ring = cfg.query.ring
    out = {}
    for src, schema in cfg.query.sources().items():
        files = [r.data for r in cfg.relations if (r.source or r.name) == src and r.data]
        if not files:
            out[src] = Relation.empty(schema, ring)
            continue
        with open(files[0], newline="") as fh:
            out[src] = read_relation(fh, schema, ring)
    return out


def read_events(path: Path, cfg: JobConfig) -> Iterator[StreamEvent]:
    """Events of a ``relation,multiplicity,v1,...`` file with a header row.

    Values follow the relation's canonical (sorted) variable order.
    """
    sources = cfg.query.sources()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            rel = row[0].strip()
            if rel not in sources:
                raise ParseError(f"{path.name}: unknown relation {rel!r}", lineno)
            schema = sources[rel]
            mult_text = row[1].strip() if len(row) > 1 else ""
            if mult_text.startswith("@"):
                yield StreamEvent(rel, mult_text, (), lineno)
                continue
            vals = [c.strip() for c in row[2:]]
            if len(vals) != len(schema):
                raise ParseError(f"{path.name}: {rel} needs {len(schema)} values, got {len(vals)}", lineno)
            try:
                mult = int(mult_text)
            except ValueError:
                try:
                    mult = float(mult_text)
                except ValueError:
                    raise ParseError(f"{path.name}: bad multiplicity {mult_text!r}", lineno) from None
            if mult == 0:
                raise ParseError(f"{path.name}: multiplicity must be non-zero", lineno)
            try:
                key = tuple(parse_value(v, schema.kind(n)) for v, n in zip(vals, schema.variables))
            except ValueError:
                raise ParseError(f"{path.name}: value does not match schema {schema}", lineno) from None
            yield StreamEvent(rel, mult, key, lineno)


def _payload(ring, mult, line: int):
    if isinstance(mult, float):
        if ring.name != "sum":
            raise ParseError(f"fractional multiplicity {mult} needs ring = sum", line)
        return mult
    return ring.from_int(mult)


def _factor_term(cfg: JobConfig, term: str, relation: str, line: int) -> list[Relation]:
    name = term[1:]
    if name not in cfg.factor_terms:
        raise ParseError(f"unknown factorized term {term!r}", line)
    schema = cfg.query.sources()[relation]
    factors = []
    for path in cfg.factor_terms[name]:
        with open(path, newline="") as fh:
            header = [h.strip() for h in next(csv.reader(fh))]
        cols = [h for h in header if h != "payload"]
        fschema = schema.project(cols)
        with open(path, newline="") as fh:
            factors.append(read_relation(fh, fschema, cfg.query.ring))
    return factors


def batches(cfg: JobConfig, batch_size: int | None = None) -> Iterator[list[UpdateDelta]]:
    """Group events, in file order, into batches of ``batch_size`` events.

    Inside a batch, listing events of one relation merge into one delta;
    factorized events become rank terms of one delta per relation.
    """
    size = batch_size or cfg.batch_size
    ring = cfg.query.ring
    sources = cfg.query.sources()

    def flush(events: list[StreamEvent]) -> list[UpdateDelta]:
        listing: dict[str, dict] = {}
        terms: dict[str, list] = {}
        order: list[tuple[str, str]] = []
        for e in events:
            if isinstance(e.multiplicity, str):
                if (e.relation, "f") not in order:
                    order.append((e.relation, "f"))
                terms.setdefault(e.relation, []).append(_factor_term(cfg, e.multiplicity, e.relation, e.line))
            else:
                if (e.relation, "l") not in order:
                    order.append((e.relation, "l"))
                d = listing.setdefault(e.relation, {})
                p = _payload(ring, e.multiplicity, e.line)
                d[e.values] = ring.add(d[e.values], p) if e.values in d else p
        out = []
        for rel, kind in order:
            if kind == "l":
                out.append(UpdateDelta(rel, Relation(sources[rel], ring, listing[rel])))
            else:
                out.append(UpdateDelta(rel, terms=terms[rel]))
        return out

    pending: list[StreamEvent] = []
    for path in cfg.stream_files:
        for e in read_events(path, cfg):
            pending.append(e)
            if len(pending) >= size:
                yield flush(pending)
                pending = []
    if pending:
        yield flush(pending)


def check_engine(engine: Engine, tol: float = 1e-9) -> list[str]:
    tol = 0.0 if engine.ring.name in ("count", "relational") else tol
    return divergences(engine.plan, engine.views(), engine.base(), tol)


def run_stream(cfg: JobConfig, batch_size: int | None = None, check: bool = False,
               engine: Engine | None = None) -> tuple[Metrics, Engine]:
    """Replay the configured streams; with ``check`` compare against the oracle.

    The oracle runs every ``check_every`` batches and after the last one.
    Raises :class:`OracleDivergence` naming the first diverging views.
    """
    if cfg.query is None:
        raise ValidationError("config has no [query]; use the mcm verb")
    if engine is None:
        engine = Engine(build_plan(cfg), load_database(cfg))
    m = Metrics()
    m.observe_views(engine.view_entry_counts())
    engine.reset_counters()
    start = time.perf_counter()
    last_checked = 0
    for batch in batches(cfg, batch_size):
        summary = engine.apply_batch(batch)
        m.tuples_processed += summary.tuples
        m.batches += 1
        m.observe_views(engine.view_entry_counts())
        if check and m.batches % cfg.check_every == 0:
            _check(engine, m)
            last_checked = m.batches
    m.wall_seconds = time.perf_counter() - start
    if check and last_checked != m.batches:
        _check(engine, m)
    if check and m.batches == 0:
        _check(engine, m)
    m.counters = engine.read_counters()
    return m, engine


def _check(engine: Engine, m: Metrics) -> None:
    m.oracle_checks += 1
    bad = check_engine(engine)
    if bad:
        m.divergences += len(bad)
        raise OracleDivergence(f"views diverge from recomputation after batch {m.batches}: {', '.join(bad)}")


def dump_views(engine: Engine, directory: str | Path) -> list[Path]:
    """Write every materialized view as ``<id>.csv`` (sorted keys)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for vid, rel in engine.views().items():
        p = d / f"{_safe(vid)}.csv"
        with open(p, "w", newline="") as fh:
            write_relation(rel, fh)
        out.append(p)
    return out


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "@_-,." else "_" for c in name)
