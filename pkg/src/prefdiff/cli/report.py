"""
report - Aggregate metrics logs into one CSV.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from ..trainer import MetricRecord, read_metrics

METRICS_GLOB = "*metrics.jsonl"
COLUMNS = ("source", "run_id", "seed", "metric", "step", "value")


def collect_metrics(root: str | Path) -> list[tuple[str, MetricRecord]]:
    """Every record of every ``*metrics.jsonl`` below ``root``, with its relative path."""
    root = Path(root)
    rows: list[tuple[str, MetricRecord]] = []
    for path in sorted(root.rglob(METRICS_GLOB)):
        source = path.relative_to(root).as_posix()
        rows.extend((source, record) for record in read_metrics(path))
    return rows


def render_csv(rows: list[tuple[str, MetricRecord]]) -> str:
    """Sorted CSV text; identical input records give identical bytes."""
    ordered = sorted(
        rows, key=lambda r: (r[0], r[1].run_id, r[1].seed, r[1].metric, r[1].step, r[1].value)
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for source, r in ordered:
        writer.writerow([source, r.run_id, r.seed, r.metric, r.step, repr(r.value)])
    return buffer.getvalue()


def write_report(root: str | Path, out: str | Path) -> tuple[Path, int]:
    rows = collect_metrics(root)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_csv(rows), encoding="utf-8", newline="\n")
    return out, len(rows)
