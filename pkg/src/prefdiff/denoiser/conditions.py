"""
conditions - Control signals for the conditional denoiser.

A Condition is a single control signal (a sector index or a target vector). A
ConditionBatch carries one condition per row and is what the network consumes.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..errors import ConditionKindMismatch, InvalidConditionError

type ConditionKind = Literal["discrete", "continuous"]


@dataclass(frozen=True)
class Condition:
    """One control signal: a bin index or a real vector."""

    kind: ConditionKind
    value: int | tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind == "discrete":
            if isinstance(self.value, tuple) or int(self.value) != self.value or self.value < 0:
                raise InvalidConditionError(f"discrete condition must be a bin index: {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif self.kind == "continuous":
            vec = tuple(float(v) for v in np.atleast_1d(np.asarray(self.value, dtype=np.float64)))
            if not np.all(np.isfinite(vec)):
                raise InvalidConditionError(f"continuous condition must be finite: {self.value}")
            object.__setattr__(self, "value", vec)
        else:
            raise InvalidConditionError(f"unknown condition kind {self.kind!r}")

    @classmethod
    def discrete(cls, index: int) -> Condition:
        return cls("discrete", int(index))

    @classmethod
    def continuous(cls, vector: Sequence[float] | np.ndarray) -> Condition:
        return cls("continuous", tuple(float(v) for v in vector))

    def payload(self) -> np.ndarray:
        if self.kind == "discrete":
            return np.asarray(self.value, dtype=np.int64)
        return np.asarray(self.value, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ConditionBatch:
    """One condition per row; ``values`` is (B,) int64 or (B, cond_dim) float64."""

    kind: ConditionKind
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def from_conditions(cls, conditions: Sequence[Condition]) -> ConditionBatch:
        if not conditions:
            raise InvalidConditionError("empty condition batch")
        kind = conditions[0].kind
        if any(c.kind != kind for c in conditions):
            raise ConditionKindMismatch("condition batch mixes discrete and continuous kinds")
        values = np.stack([c.payload() for c in conditions])
        return cls(kind, values)

    @classmethod
    def coerce(
        cls, c: Condition | ConditionBatch | Sequence[Condition], rows: int
    ) -> ConditionBatch:
        """Normalize any accepted condition input to a batch of ``rows`` rows."""
        if isinstance(c, ConditionBatch):
            batch = c
        elif isinstance(c, Condition):
            batch = cls(c.kind, np.stack([c.payload()] * rows))
        else:
            batch = cls.from_conditions(list(c))
        if len(batch) != rows:
            raise InvalidConditionError(f"{len(batch)} conditions for {rows} rows")
        return batch

    def take(self, index: np.ndarray) -> ConditionBatch:
        return ConditionBatch(self.kind, self.values[index])

    def to_conditions(self) -> list[Condition]:
        if self.kind == "discrete":
            return [Condition.discrete(int(v)) for v in self.values]
        return [Condition.continuous(v) for v in self.values]

    def equal_rows(self, other: ConditionBatch) -> np.ndarray:
        """Row-wise exact equality with another batch of the same kind."""
        if self.kind != other.kind:
            raise ConditionKindMismatch(f"cannot compare {self.kind} with {other.kind} conditions")
        if self.kind == "discrete":
            return self.values == other.values
        return np.all(self.values == other.values, axis=1)
