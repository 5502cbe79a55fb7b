"""Job configuration files.

An INI-style job file, for example::

    [query]
    ring = count            ; count | sum | degree | relational | factorized
    free = A, C

    [order]
    tree = A(B, C(D, E))
    place.S = E             ; optional placement override

    [relation R]
    schema = A:str, B:str
    data = r.csv
    updatable = yes

    [lifting]               ; ring = sum: one entry per bound variable
    B = value

    [stream]
    files = events.csv
    batch_size = 100

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from ringivm.core.lifting import LiftingFunction
from ringivm.core.ring import Ring
from ringivm.core.schema import KINDS, Schema
from ringivm.errors import InvalidVariableOrder, ParseError, RingIVMError, ValidationError
from ringivm.planner.order import VariableOrder
from ringivm.planner.query import QuerySpec, RelationSpec
from ringivm.rings.degree import DegreeMRing
from ringivm.rings.numeric import IntegerRing, RealRing, count_catalog, one_lifting, square_lifting, value_lifting
from ringivm.rings.relational import RelationalRing

RINGS = ("count", "sum", "degree", "relational", "factorized")
LIFTINGS = ("value", "one", "square")


@dataclass
class RelationConfig:
    name: str
    schema: Schema
    data: Path | None = None
    updatable: bool = True
    source: str | None = None
    rename: tuple[tuple[str, str], ...] | None = None


@dataclass
class RegressionConfig:
    label: str
    features: list[str]
    alpha: float | None = None
    iterations: int = 1_000_000
    tolerance: float = 1e-9


@dataclass
class MatrixChainConfig:
    p: int = 8
    length: int = 3
    rank: int = 1
    updates: int = 1
    target: int = 2
    seed: int = 0
    matrices: list[Path] = field(default_factory=list)
    u: list[Path] = field(default_factory=list)
    v: list[Path] = field(default_factory=list)


@dataclass
class JobConfig:
    path: Path | None
    ring_name: str
    ring: Ring | None
    query: QuerySpec | None
    order: VariableOrder | None
    relations: list[RelationConfig]
    mode: str = "listing"
    indicators: bool = True
    stream_files: list[Path] = field(default_factory=list)
    batch_size: int = 1
    check_every: int = 10
    factor_terms: dict[str, list[Path]] = field(default_factory=dict)
    regression: RegressionConfig | None = None
    mcm: MatrixChainConfig | None = None

    def relation(self, name: str) -> RelationConfig:
        for r in self.relations:
            if r.name == name:
                return r
        raise ValidationError(f"no relation {name!r}")


def _lines(text: str) -> dict[tuple[str, str | None], int]:
    """Line numbers of sections and keys, for error messages."""
    out: dict[tuple[str, str | None], int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
        elif section and re.match(r"[^=:;#\s][^=:]*[=:]", s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), i)
    return out


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace("\n", ",").split(",") if v.strip()]


def _bool(value: str, where: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValidationError(f"{where}: expected yes/no, got {value!r}")


def _schema(spec: str, where: str) -> Schema:
    pairs = []
    for item in _split(spec):
        name, _, kind = item.partition(":")
        kind = kind.strip() or "int"
        if kind not in KINDS:
            raise ValidationError(f"{where}: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
        if not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", name.strip()):
            raise ValidationError(f"{where}: bad variable name {name!r}")
        pairs.append((name.strip(), kind))
    return Schema(pairs)


def _mcm(cp, where, resolve) -> MatrixChainConfig:
    ms = cp["mcm"]
    try:
        m = MatrixChainConfig(
            int(ms.get("p", "8")), int(ms.get("length", "3")), int(ms.get("rank", "1")),
            int(ms.get("updates", "1")), int(ms.get("target", "2")), int(ms.get("seed", "0")),
            [resolve(f) for f in _split(ms.get("matrices", ""))],
            [resolve(f) for f in _split(ms.get("u", ""))],
            [resolve(f) for f in _split(ms.get("v", ""))],
        )
    except ValueError:
        raise ValidationError(f"{where('mcm')}: bad numeric option") from None
    if m.length < 2 or m.p < 1 or m.rank < 1 or not 1 <= m.target <= m.length:
        raise ValidationError(f"{where('mcm')}: need length >= 2, p >= 1, rank >= 1, 1 <= target <= length")
    return m


def parse_config(text: str, path: str | Path | None = None) -> JobConfig:
    """Parse and validate a job file; paths resolve relative to ``path``'s directory."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(str(exc).split(":")[0], exc.lineno) from None
    lines = _lines(text)
    base = Path(path).resolve().parent if path is not None else Path.cwd()

    def where(section: str, key: str | None = None) -> str:
        line = lines.get((section, key.lower() if key else None)) or lines.get((section, None))
        loc = f"line {line}: " if line else ""
        return f"{loc}[{section}]" + (f" {key}" if key else "")

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    if not cp.has_section("query"):
        if cp.has_section("mcm"):
            # the matrix-chain preset generates its own query
            return JobConfig(path and Path(path), "sum", None, None, None, [], mcm=_mcm(cp, where, resolve))
        raise ValidationError("missing [query] section")
    qs = cp["query"]
    ring_name = qs.get("ring", "count").strip().lower()
    if ring_name not in RINGS:
        raise ValidationError(f"{where('query', 'ring')}: unknown ring {ring_name!r} (expected one of {', '.join(RINGS)})")
    free = _split(qs.get("free", ""))

    relations: list[RelationConfig] = []
    for sec in cp.sections():
        if not sec.startswith("relation"):
            continue
        name = sec[len("relation"):].strip()
        if not name:
            raise ValidationError(f"{where(sec)}: relation section needs a name")
        rs = cp[sec]
        if "schema" not in rs:
            raise ValidationError(f"{where(sec)}: missing schema")
        schema = _schema(rs["schema"], where(sec, "schema"))
        rename = None
        if "rename" in rs:
            pairs = []
            for item in _split(rs["rename"]):
                src, sep, var = item.partition(":")
                if not sep:
                    raise ValidationError(f"{where(sec, 'rename')}: expected source:variable pairs")
                pairs.append((src.strip(), var.strip()))
            rename = tuple(pairs)
            if sorted(v for _, v in rename) != sorted(schema.variables):
                raise ValidationError(f"{where(sec, 'rename')}: must map onto every variable of the schema")
        relations.append(RelationConfig(
            name, schema,
            resolve(rs["data"]) if rs.get("data") else None,
            _bool(rs.get("updatable", "yes"), where(sec, "updatable")),
            rs.get("source", "").strip() or None,
            rename,
        ))
    if not relations:
        raise ValidationError("no [relation NAME] sections")

    specs = [RelationSpec(r.name, r.schema, r.source, r.rename) for r in relations]
    all_vars = Schema()
    for s in specs:
        all_vars = all_vars.union(s.schema)
    bad_free = [v for v in free if v not in all_vars]
    if bad_free:
        raise ValidationError(f"{where('query', 'free')}: free variables {bad_free} occur in no relation schema")
    bound = [v for v in all_vars.variables if v not in free]

    liftings: dict[str, LiftingFunction] = {}
    mode = "listing"
    if ring_name == "count":
        ring: Ring = IntegerRing()
        liftings = count_catalog(bound, ring)
    elif ring_name == "sum":
        ring = RealRing()
        for v in _split(qs.get("sum", "")):
            if v not in all_vars:
                raise ValidationError(f"{where('query', 'sum')}: unknown variable {v!r}")
            liftings[v] = value_lifting(v)
        if cp.has_section("lifting"):
            for v, kind in cp["lifting"].items():
                if v not in all_vars:
                    raise ValidationError(f"{where('lifting', v)}: unknown variable {v!r}")
                kind = kind.strip().lower()
                if kind not in LIFTINGS:
                    raise ValidationError(f"{where('lifting', v)}: unknown lifting {kind!r}")
                liftings[v] = {"value": value_lifting, "square": square_lifting}.get(
                    kind, lambda x: one_lifting(x, ring))(v)
        missing = [v for v in bound if v not in liftings]
        if missing:
            raise ValidationError(f"{where('query', 'ring')}: bound variables {missing} have no lifting under ring=sum")
    elif ring_name == "degree":
        feats = _split(qs.get("features", "")) or [v for v in all_vars.variables if all_vars.kind(v) != "str"]
        unknown = [v for v in feats if v not in all_vars]
        if unknown:
            raise ValidationError(f"{where('query', 'features')}: unknown variables {unknown}")
        ring = DegreeMRing(variables=sorted(set(feats)))
        liftings = ring.catalog(bound)
    else:
        ring = RelationalRing()
        mode = "factorized" if ring_name == "factorized" else "listing"

    try:
        query = QuerySpec(specs, frozenset(free), ring, liftings,
                          frozenset(r.source or r.name for r in relations if r.updatable))
    except RingIVMError as exc:
        raise ValidationError(str(exc)) from None

    if not cp.has_section("order"):
        raise ValidationError("missing [order] section")
    os_ = cp["order"]
    placement = {k[len("place."):]: v.strip() for k, v in os_.items() if k.startswith("place.")}
    for r in placement:
        if r not in query.names:
            raise ValidationError(f"{where('order', 'place.' + r)}: unknown relation {r!r}")
    try:
        if "tree" in os_:
            order = VariableOrder.parse(os_["tree"], placement)
        else:
            parents = {k: (v.strip() or None) for k, v in os_.items() if not k.startswith("place.")}
            parents = {k: (None if v in (None, "-", "none") else v) for k, v in parents.items()}
            order = VariableOrder(parents, placement)
        order.bind({r.name: r.schema.variables for r in specs}, free, factorized=mode == "factorized")
    except ParseError as exc:
        raise ParseError(str(exc), lines.get(("order", "tree"))) from None
    except InvalidVariableOrder as exc:
        raise ValidationError(f"{where('order')}: {exc}") from None

    cfg = JobConfig(path and Path(path), ring_name, ring, query, order, relations, mode,
                    _bool(qs.get("indicators", "yes"), where("query", "indicators")))

    if cp.has_section("stream"):
        ss = cp["stream"]
        cfg.stream_files = [resolve(f) for f in _split(ss.get("files", ""))]
        try:
            cfg.batch_size = int(ss.get("batch_size", "1"))
            cfg.check_every = int(ss.get("check_every", "10"))
        except ValueError:
            raise ValidationError(f"{where('stream')}: batch_size and check_every must be integers") from None
        if cfg.batch_size < 1:
            raise ValidationError(f"{where('stream', 'batch_size')}: batch size must be at least 1")
        if cfg.check_every < 1:
            raise ValidationError(f"{where('stream', 'check_every')}: must be at least 1")
    if cp.has_section("factorized"):
        for term, files in cp["factorized"].items():
            cfg.factor_terms[term] = [resolve(f) for f in _split(files)]

    if cp.has_section("regression"):
        rg = cp["regression"]
        if ring_name != "degree":
            raise ValidationError(f"{where('regression')}: regression needs ring = degree")
        label = rg.get("label", "").strip()
        feats = _split(rg.get("features", ""))
        for v in [label, *feats]:
            if v not in ring.index:
                raise ValidationError(f"{where('regression')}: {v!r} is not a degree-ring variable")
        try:
            cfg.regression = RegressionConfig(
                label, feats,
                float(rg["alpha"]) if rg.get("alpha") else None,
                int(rg.get("iterations", "1000000")),
                float(rg.get("tolerance", "1e-9")),
            )
        except ValueError:
            raise ValidationError(f"{where('regression')}: bad numeric option") from None

    if cp.has_section("mcm"):
        cfg.mcm = _mcm(cp, where, resolve)
    return cfg


def load_config(path: str | Path) -> JobConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, p)
