"""
accounting - Order-statistics coverage and the storage/compute cost of curation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from ..context import make_rng
from ..errors import InsufficientDrawsError
from .curation import DEFAULT_N_SAMPLES

MIN_ORDER_STAT_TRIALS = 10_000

IMAGE_UNITS = Fraction(1)
CONDITION_UNITS = Fraction(1, 3)

type Pipeline = Literal["cpo", "dpo"]
type Distribution = Literal["uniform", "normal"]


def expected_coverage(n: int) -> float:
    """(n - 1) / (n + 1): chance a fresh draw lands strictly inside n draws' range."""
    return (n - 1) / (n + 1)


def order_stat_probability(
    n: int,
    trials: int,
    distribution: Distribution = "uniform",
    seed: int = 0,
) -> float:
    """
    Monte Carlo estimate of P(min(s_1..s_n) < s' < max(s_1..s_n)).

    Args:
        n: Number of reference draws, at least 2
        trials: Monte Carlo trials, at least 10^4
        distribution: ``uniform`` or ``normal``
        seed: Seed of the ``order_stats/{distribution}/{n}`` stream

    Returns:
        The estimated probability; its expectation is (n - 1) / (n + 1).
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if trials < MIN_ORDER_STAT_TRIALS:
        raise InsufficientDrawsError(trials, MIN_ORDER_STAT_TRIALS)
    rng = make_rng(seed, f"order_stats/{distribution}/{n}")
    if distribution == "uniform":
        draws = rng.uniform(size=(trials, n + 1))
    elif distribution == "normal":
        draws = rng.standard_normal((trials, n + 1))
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    ref, fresh = draws[:, :n], draws[:, n]
    inside = (ref.min(axis=1) < fresh) & (fresh < ref.max(axis=1))
    return float(inside.mean())


@dataclass(frozen=True)
class StorageReport:
    """Storage cost of one preference record in RGB-image units."""

    pipeline: Pipeline
    include_original: bool
    images: int
    conditions: int
    units: Fraction
    """Exact cost."""

    @property
    def value(self) -> float:
        return float(self.units)

    @property
    def reported(self) -> float:
        """The cost truncated to two decimals, as tabulated."""
        return math.floor(self.units * 100) / 100


def storage_compute_report(pipeline: Pipeline, include_original: bool = False) -> StorageReport:
    """
    Storage accounting with one RGB image = 1 unit and one condition map = 1/3 unit.

    A CPO triplet holds 1 image and 2 conditions; a DPO pair holds 2 images and 1
    condition, plus the original image when ``include_original`` is set.
    """
    if pipeline == "cpo":
        images, conditions = 1, 2
    elif pipeline == "dpo":
        images, conditions = (3 if include_original else 2), 1
    else:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    units = images * IMAGE_UNITS + conditions * CONDITION_UNITS
    return StorageReport(pipeline, include_original, images, conditions, units)


def storage_ratios() -> dict[str, Fraction]:
    """CPO storage relative to DPO without and with the original image (5/8, 5/11)."""
    cpo = storage_compute_report("cpo").units
    return {
        "cpo_vs_dpo": cpo / storage_compute_report("dpo").units,
        "cpo_vs_dpo_with_original": cpo / storage_compute_report("dpo", True).units,
    }


def compute_ratio(n_samples: int = DEFAULT_N_SAMPLES) -> int:
    """Generator calls of DPO curation per CPO call on the same source data."""
    return n_samples
