"""
task - The 2-D controllable-generation toy task and its condition detector.

Discrete variant: K angular sectors of an annulus; the condition is the sector
index. Continuous variant: the condition is a target point on the unit circle,
quantized to a grid, and samples cluster tightly around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import Field

from ..config import Settings
from ..context import make_rng
from ..denoiser import ArchConfig, Condition, ConditionBatch
from ..errors import InvalidConditionError

TWO_PI = 2.0 * math.pi


class ToyTask(Settings):
    """Definition of the toy data distribution and detector R."""

    condition_kind: Literal["discrete", "continuous"] = Field(default="discrete")
    data_dim: int = Field(default=2, ge=2, le=2, description="The toy task is planar.")
    num_classes: int = Field(default=8, ge=2, description="Number of angular sectors K.")
    radius: float = Field(default=1.0, gt=0.0, description="Annulus radius.")
    radial_noise: float = Field(default=0.1, ge=0.0, description="Std of the radial jitter.")
    grid_step: float = Field(
        default=0.05, gt=0.0, description="Quantization step of continuous conditions."
    )
    match_tolerance: float = Field(
        default=0.1,
        gt=0.0,
        description="Continuous task: maximum distance between detected and requested conditions.",
    )

    @property
    def discrete(self) -> bool:
        return self.condition_kind == "discrete"

    def arch(self, **overrides: object) -> ArchConfig:
        """Denoiser architecture matching this task's data and conditions."""
        values: dict[str, object] = {
            "data_dim": self.data_dim,
            "condition_kind": self.condition_kind,
            "num_classes": self.num_classes,
            "cond_dim": self.data_dim,
        }
        values.update(overrides)
        return ArchConfig.create(**values)


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A real sample and its ground-truth condition (None when unavailable)."""

    x0: np.ndarray
    c: Condition | None
    index: int = 0


def quantize(task: ToyTask, x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x, dtype=np.float64) / task.grid_step) * task.grid_step


def _check_points(task: ToyTask, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    arr = arr.reshape(1, -1) if arr.ndim == 1 else arr
    if arr.ndim != 2 or arr.shape[1] != task.data_dim:
        raise InvalidConditionError(
            f"expected points of dimension {task.data_dim}, got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidConditionError("cannot detect a condition on non-finite input")
    return arr


def sector_of(task: ToyTask, x: np.ndarray) -> np.ndarray:
    """Sector index floor(K * angle / 2pi) mod K per row; the zero vector is sector 0."""
    pts = _check_points(task, x)
    angle = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
    return np.floor(task.num_classes * angle / TWO_PI).astype(np.int64) % task.num_classes


def detect_batch(task: ToyTask, x: np.ndarray) -> ConditionBatch:
    """Detector R applied to every row of ``x``."""
    if task.discrete:
        return ConditionBatch("discrete", sector_of(task, x))
    return ConditionBatch("continuous", quantize(task, _check_points(task, x)))


def detect_condition(task: ToyTask, x: np.ndarray) -> Condition:
    """
    Detector R on one point.

    Discrete task: the angular sector. Continuous task: the point quantized to the
    task grid.
    """
    return detect_batch(task, x).to_conditions()[0]


def circular_distance(task: ToyTask, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.abs(np.asarray(a) - np.asarray(b)) % task.num_classes
    return np.minimum(diff, task.num_classes - diff)


def matches(task: ToyTask, detected: ConditionBatch, requested: ConditionBatch) -> np.ndarray:
    """Row-wise: does the detected condition satisfy the requested one?"""
    if task.discrete:
        return detected.equal_rows(requested)
    gap = np.linalg.norm(detected.values - requested.values, axis=1)
    return gap <= task.match_tolerance


def controllability_score(task: ToyTask, x: np.ndarray, requested: ConditionBatch) -> np.ndarray:
    """
    Per-row controllability score used to rank candidates.

    Discrete: 1 on a match, else minus the circular sector distance. Continuous:
    minus the Euclidean error between detected and requested conditions.
    """
    detected = detect_batch(task, x)
    if task.discrete:
        dist = circular_distance(task, detected.values, requested.values)
        return np.where(dist == 0, 1.0, -dist.astype(np.float64))
    return -np.linalg.norm(detected.values - requested.values, axis=1)


def quality_proxy(task: ToyTask, x: np.ndarray) -> np.ndarray:
    """Negative distance to the data manifold, -| ||x|| - radius |."""
    pts = np.asarray(x, dtype=np.float64).reshape(-1, task.data_dim)
    return -np.abs(np.linalg.norm(pts, axis=1) - task.radius)


def sample_conditions(task: ToyTask, n: int, rng: np.random.Generator) -> ConditionBatch:
    """Draw ``n`` conditions uniformly from the task's condition space."""
    if task.discrete:
        return ConditionBatch("discrete", rng.integers(0, task.num_classes, size=n))
    phi = rng.uniform(0.0, TWO_PI, size=n)
    centers = task.radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return ConditionBatch("continuous", quantize(task, centers))


def sample_given(task: ToyTask, c: ConditionBatch, rng: np.random.Generator) -> np.ndarray:
    """Draw one real sample per row from the conditional data distribution."""
    n = len(c)
    if task.discrete:
        width = TWO_PI / task.num_classes
        angle = (c.values + rng.uniform(0.0, 1.0, size=n)) * width
        r = task.radius + task.radial_noise * rng.standard_normal(n)
        return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
    jitter = (task.grid_step / 6.0) * rng.standard_normal((n, task.data_dim))
    return c.values + jitter


def sample_dataset(
    task: ToyTask, n: int, seed: int | np.random.Generator
) -> list[LabeledSample]:
    """
    Draw ``n`` labelled samples with uniformly distributed conditions.

    An integer seed is expanded into the ``dataset`` stream of that seed.

    Raises:
        ValueError: n is not positive.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "dataset")
    conditions = sample_conditions(task, n, rng)
    x0 = sample_given(task, conditions, rng)
    return [
        LabeledSample(x0=x0[i].copy(), c=cond, index=i)
        for i, cond in enumerate(conditions.to_conditions())
    ]


def stack_samples(samples: list[LabeledSample]) -> np.ndarray:
    return np.stack([s.x0 for s in samples])
