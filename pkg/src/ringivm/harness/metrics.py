"""Run metrics and their text / CSV reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

FIELDS = ("tuples_processed", "batches", "wall_seconds", "throughput", "entries_touched",
          "payload_mults", "payload_adds", "view_entries", "peak_view_entries",
          "oracle_checks", "divergences")


@dataclass
class Metrics:
    tuples_processed: int = 0
    batches: int = 0
    wall_seconds: float = 0.0
    view_sizes: dict[str, int] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    peak_view_entries: int = 0
    oracle_checks: int = 0
    divergences: int = 0
    extra: dict[str, object] = field(default_factory=dict)

    @property
    def throughput(self) -> float:
        return self.tuples_processed / self.wall_seconds if self.wall_seconds > 0 else 0.0

    @property
    def view_entries(self) -> int:
        return sum(self.view_sizes.values())

    def observe_views(self, sizes: dict[str, int]) -> None:
        self.view_sizes = dict(sizes)
        self.peak_view_entries = max(self.peak_view_entries, self.view_entries)

    def rows(self) -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = []
        for f in FIELDS:
            if f in ("entries_touched", "payload_mults", "payload_adds"):
                out.append((f, self.counters.get(f, 0)))
            else:
                out.append((f, getattr(self, f)))
        out += [(f"view.{v}", n) for v, n in sorted(self.view_sizes.items())]
        out += [(k, v) for k, v in sorted(self.extra.items())]
        return out


def _fmt(v: object) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report_metrics(m: Metrics, fmt: str = "text") -> str:
    """A ``metric,value`` CSV or an aligned two-column table, in a fixed field order."""
    rows = m.rows()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, _fmt(v)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown metrics format {fmt!r}")
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {_fmt(v)}\n" for k, v in rows)
