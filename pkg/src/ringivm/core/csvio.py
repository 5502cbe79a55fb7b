"""CSV form of relations: key columns in schema order, then a payload column."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable
from typing import TextIO

from ringivm.core.relation import Relation
from ringivm.core.ring import Ring
from ringivm.core.schema import Schema, format_value, parse_value
from ringivm.errors import ParseError, SchemaMismatch

PAYLOAD_COLUMN = "payload"


def write_relation(rel: Relation, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow([*rel.schema.variables, PAYLOAD_COLUMN])
    fmt = rel.ring.format
    for key, p in rel.sorted_items():
        w.writerow([*(format_value(v) for v in key), fmt(p)])


def relation_to_csv(rel: Relation) -> str:
    buf = io.StringIO()
    write_relation(rel, buf)
    return buf.getvalue()


def read_relation(src: TextIO | Iterable[str], schema: Schema, ring: Ring) -> Relation:
    """Read a relation written by :func:`write_relation`.

    Columns may come in any order; a missing payload column means ``one``
    per row. Rows with repeated keys have their payloads summed.
    """
    reader = csv.reader(src)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        return Relation.empty(schema, ring)
    has_payload = PAYLOAD_COLUMN in header
    cols = [h for h in header if h != PAYLOAD_COLUMN]
    if sorted(cols) != sorted(schema.variables):
        raise SchemaMismatch(f"CSV columns {cols} do not match schema {schema}")
    idx = {h: i for i, h in enumerate(header)}
    order = [idx[v] for v in schema.variables]
    kinds = [schema.kind(v) for v in schema.variables]
    pidx = idx.get(PAYLOAD_COLUMN)
    data: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            key = tuple(parse_value(row[i].strip(), k) for i, k in zip(order, kinds))
            p = ring.parse(row[pidx].strip()) if has_payload else ring.one
        except (ValueError, ParseError) as exc:
            raise ParseError(str(exc), lineno) from exc
        data[key] = ring.add(data[key], p) if key in data else p
    return Relation(schema, ring, data)
