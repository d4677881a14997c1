"""
batches - Stacked views of preference examples as consumed by the objectives.

The objectives work on whole batches. Single curated records (anything with the
CPO fields ``x0, c_w, c_l`` or the DPO fields ``x0_w, x0_l, c``) and sequences of
them are stacked on demand.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..denoiser import Condition, ConditionBatch
from ..errors import ConditionKindMismatch, DatasetMismatchError, ShapeError


@runtime_checkable
class CpoExample(Protocol):
    x0: np.ndarray
    c_w: Condition
    c_l: Condition


@runtime_checkable
class DpoExample(Protocol):
    x0_w: np.ndarray
    x0_l: np.ndarray
    c: Condition


def _rows(x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


@dataclass(frozen=True, eq=False)
class CpoBatch:
    """One fixed sample per row with its winning and losing conditions."""

    x0: np.ndarray
    c_w: ConditionBatch
    c_l: ConditionBatch

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", _rows(self.x0))
        if self.c_w.kind != self.c_l.kind:
            raise ConditionKindMismatch(
                f"winning condition is {self.c_w.kind}, losing condition is {self.c_l.kind}"
            )
        if not (len(self.c_w) == len(self.c_l) == self.x0.shape[0]):
            raise ShapeError(
                "CpoBatch", [self.x0.shape, self.c_w.values.shape, self.c_l.values.shape]
            )

    def __len__(self) -> int:
        return int(self.x0.shape[0])

    def take(self, index: np.ndarray) -> CpoBatch:
        return CpoBatch(self.x0[index], self.c_w.take(index), self.c_l.take(index))


@dataclass(frozen=True, eq=False)
class DpoBatch:
    """Winning and losing samples per row under one shared condition."""

    x0_w: np.ndarray
    x0_l: np.ndarray
    c: ConditionBatch

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0_w", _rows(self.x0_w))
        object.__setattr__(self, "x0_l", _rows(self.x0_l))
        if self.x0_w.shape != self.x0_l.shape or len(self.c) != self.x0_w.shape[0]:
            raise ShapeError("DpoBatch", [self.x0_w.shape, self.x0_l.shape, self.c.values.shape])

    def __len__(self) -> int:
        return int(self.x0_w.shape[0])

    def take(self, index: np.ndarray) -> DpoBatch:
        return DpoBatch(self.x0_w[index], self.x0_l[index], self.c.take(index))


type CpoInput = CpoBatch | CpoExample | Sequence[CpoExample]
type DpoInput = DpoBatch | DpoExample | Sequence[DpoExample]


def as_cpo_batch(examples: CpoInput) -> CpoBatch:
    """Stack one CPO record, a sequence of them, or pass a CpoBatch through."""
    if isinstance(examples, CpoBatch):
        return examples
    items = [examples] if isinstance(examples, CpoExample) else list(examples)
    if not items:
        raise DatasetMismatchError("empty CPO batch")
    if not all(isinstance(e, CpoExample) for e in items):
        raise DatasetMismatchError("batch mixes CPO triplets with other record types")
    return CpoBatch(
        x0=np.stack([np.asarray(e.x0, dtype=np.float64) for e in items]),
        c_w=ConditionBatch.from_conditions([e.c_w for e in items]),
        c_l=ConditionBatch.from_conditions([e.c_l for e in items]),
    )


def as_dpo_batch(examples: DpoInput) -> DpoBatch:
    """Stack one DPO record, a sequence of them, or pass a DpoBatch through."""
    if isinstance(examples, DpoBatch):
        return examples
    items = [examples] if isinstance(examples, DpoExample) else list(examples)
    if not items:
        raise DatasetMismatchError("empty DPO batch")
    if not all(isinstance(e, DpoExample) for e in items):
        raise DatasetMismatchError("batch mixes DPO pairs with other record types")
    return DpoBatch(
        x0_w=np.stack([np.asarray(e.x0_w, dtype=np.float64) for e in items]),
        x0_l=np.stack([np.asarray(e.x0_l, dtype=np.float64) for e in items]),
        c=ConditionBatch.from_conditions([e.c for e in items]),
    )
