"""
metrics - Append-only metrics log.

One JSON object per line: run_id, seed, step, metric, value. Records are also
kept in memory so callers can inspect a run without reading the file back.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from pathlib import Path

from pydantic import BaseModel, ValidationError

from ..errors import DatasetMismatchError

logger = logging.getLogger(__name__)


class MetricRecord(BaseModel):
    run_id: str
    seed: int
    step: int
    metric: str
    value: float


class MetricsLog:
    """Writes metric records for one run; ``path=None`` keeps them in memory only."""

    def __init__(self, path: str | Path | None, run_id: str = "run", seed: int = 0):
        self.path = Path(path) if path is not None else None
        self.run_id = run_id
        self.seed = seed
        self.records: list[MetricRecord] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, step: int, metric: str, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            logger.warning("Skipping non-finite metric %s=%r at step %d", metric, value, step)
            return
        record = MetricRecord(
            run_id=self.run_id, seed=self.seed, step=step, metric=metric, value=value
        )
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8", newline="\n") as f:
                f.write(record.model_dump_json())
                f.write("\n")

    def extend(self, step: int, values: Mapping[str, float]) -> None:
        for metric, value in values.items():
            self.append(step, metric, value)

    def values(self, metric: str) -> list[float]:
        """Logged values of one metric, in step order."""
        return [r.value for r in sorted(self.records, key=lambda r: r.step) if r.metric == metric]


def read_metrics(path: str | Path) -> list[MetricRecord]:
    """Read every record of a metrics log."""
    path = Path(path)
    records: list[MetricRecord] = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(MetricRecord.model_validate_json(line))
            except ValidationError as e:
                raise DatasetMismatchError(f"{path}:{lineno}: malformed metric record") from e
    return records
