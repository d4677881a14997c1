"""
records - Line-delimited JSON files of curated CPO triplets and DPO pairs.

One record per line. Field order is fixed:

    cpo: schema_version, type, source_index, kind, x0, c_w, c_l, fallback
    dpo: schema_version, type, source_index, kind, x0_w, x0_l, c,
         score_w, score_l, quality_w, quality_l

Discrete conditions are stored as integers, continuous ones as lists. Floats use
the shortest text form that reads back to the identical 64-bit value.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, ValidationError

from ..denoiser import Condition, ConditionKind
from ..errors import ConfigMigrationError, DatasetMismatchError
from .curation import CpoTriplet, DpoPair

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1

Payload = int | list[float]
Kind = Literal["discrete", "continuous"]


class CpoRow(BaseModel):
    schema_version: int = RECORD_SCHEMA_VERSION
    type: Literal["cpo"] = "cpo"
    source_index: int
    kind: Kind
    x0: list[float]
    c_w: Payload
    c_l: Payload
    fallback: bool = False


class DpoRow(BaseModel):
    schema_version: int = RECORD_SCHEMA_VERSION
    type: Literal["dpo"] = "dpo"
    source_index: int
    kind: Kind
    x0_w: list[float]
    x0_l: list[float]
    c: Payload
    score_w: float
    score_l: float
    quality_w: float
    quality_l: float


_ROW = TypeAdapter(Annotated[CpoRow | DpoRow, Field(discriminator="type")])

type Record = CpoTriplet | DpoPair


def _payload(c: Condition) -> Payload:
    if isinstance(c.value, tuple):
        return list(c.value)
    return int(c.value)


def _condition(kind: ConditionKind, payload: Payload) -> Condition:
    if kind == "discrete":
        return Condition.discrete(int(payload))  # type: ignore[arg-type]
    return Condition.continuous(payload)  # type: ignore[arg-type]


def _to_row(record: Record) -> CpoRow | DpoRow:
    if isinstance(record, CpoTriplet):
        return CpoRow(
            source_index=record.source_index,
            kind=record.c_w.kind,
            x0=record.x0.tolist(),
            c_w=_payload(record.c_w),
            c_l=_payload(record.c_l),
            fallback=record.fallback,
        )
    return DpoRow(
        source_index=record.source_index,
        kind=record.c.kind,
        x0_w=record.x0_w.tolist(),
        x0_l=record.x0_l.tolist(),
        c=_payload(record.c),
        score_w=record.score_w,
        score_l=record.score_l,
        quality_w=record.quality_w,
        quality_l=record.quality_l,
    )


def _from_row(row: CpoRow | DpoRow) -> Record:
    if isinstance(row, CpoRow):
        return CpoTriplet(
            x0=np.asarray(row.x0, dtype=np.float64),
            c_w=_condition(row.kind, row.c_w),
            c_l=_condition(row.kind, row.c_l),
            source_index=row.source_index,
            fallback=row.fallback,
        )
    return DpoPair(
        x0_w=np.asarray(row.x0_w, dtype=np.float64),
        x0_l=np.asarray(row.x0_l, dtype=np.float64),
        c=_condition(row.kind, row.c),
        score_w=row.score_w,
        score_l=row.score_l,
        quality_w=row.quality_w,
        quality_l=row.quality_l,
        source_index=row.source_index,
    )


def write_records(path: str | Path, records: Sequence[Record]) -> Path:
    """Write curated records, one JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(_to_row(record).model_dump_json())
            f.write("\n")
    logger.info("Wrote %d records to %s", len(records), path)
    return path


def read_records(path: str | Path) -> list[Record]:
    """
    Read a record file written by write_records.

    Raises:
        ConfigMigrationError: a line has another schema_version.
        DatasetMismatchError: a line is malformed or the file mixes record types.
    """
    path = Path(path)
    records: list[Record] = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetMismatchError(f"{path}:{lineno}: not valid JSON ({e.msg})") from e
            version = raw.get("schema_version") if isinstance(raw, dict) else None
            if version != RECORD_SCHEMA_VERSION:
                raise ConfigMigrationError(
                    int(version) if isinstance(version, int) else -1,
                    RECORD_SCHEMA_VERSION,
                    source=f"{path}:{lineno}",
                )
            try:
                records.append(_from_row(_ROW.validate_python(raw)))
            except ValidationError as e:
                raise DatasetMismatchError(f"{path}:{lineno}: malformed record ({e})") from e
    if len({type(r) for r in records}) > 1:
        raise DatasetMismatchError(f"{path}: file mixes CPO triplets and DPO pairs")
    return records


def record_kind(records: Sequence[Record]) -> Literal["cpo", "dpo"]:
    """The method a homogeneous record list belongs to."""
    if not records:
        raise DatasetMismatchError("empty dataset")
    if all(isinstance(r, CpoTriplet) for r in records):
        return "cpo"
    if all(isinstance(r, DpoPair) for r in records):
        return "dpo"
    raise DatasetMismatchError("dataset mixes CPO triplets and DPO pairs")
