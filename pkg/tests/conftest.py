"""Shared fixtures: tiny denoisers, short schedules and small preference batches."""

from __future__ import annotations

import numpy as np
import pytest

from prefdiff.denoiser import (
    ArchConfig,
    ConditionBatch,
    DenoiserParams,
    clone_trainable,
    init_params,
)
from prefdiff.losses import CpoBatch, DpoBatch, PreferenceConfig
from prefdiff.schedule import NoiseSchedule, linear_schedule
from prefdiff.toyworld import ToyTask

SHORT_T = 20


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def task() -> ToyTask:
    return ToyTask(num_classes=4)


@pytest.fixture
def tiny_arch() -> ArchConfig:
    return ArchConfig.create(hidden=8, depth=1, time_dim=4, embed_dim=4, num_classes=4, seed=0)


@pytest.fixture
def short_schedule() -> NoiseSchedule:
    return linear_schedule(SHORT_T, 1e-3, 0.3)


@pytest.fixture
def short_cfg() -> PreferenceConfig:
    return PreferenceConfig.from_alpha(50.0, T=SHORT_T)


@pytest.fixture
def ref(tiny_arch: ArchConfig) -> DenoiserParams:
    return init_params(tiny_arch)


@pytest.fixture
def theta(ref: DenoiserParams) -> DenoiserParams:
    """A trainable copy of ``ref`` nudged away from it."""
    params = clone_trainable(ref)
    rng = np.random.default_rng(99)
    for p in params.parameters():
        p.data += 0.05 * rng.standard_normal(p.shape)
    return params


@pytest.fixture
def cpo_batch(rng: np.random.Generator) -> CpoBatch:
    c_w = rng.integers(0, 4, size=6)
    c_l = (c_w + rng.integers(1, 4, size=6)) % 4
    return CpoBatch(
        rng.standard_normal((6, 2)),
        ConditionBatch("discrete", c_w),
        ConditionBatch("discrete", c_l),
    )


@pytest.fixture
def dpo_batch(rng: np.random.Generator) -> DpoBatch:
    return DpoBatch(
        rng.standard_normal((6, 2)),
        rng.standard_normal((6, 2)),
        ConditionBatch("discrete", rng.integers(0, 4, size=6)),
    )
