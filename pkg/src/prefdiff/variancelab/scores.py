"""
scores - The score difference between the two branches of a preference example.

With s_theta(u) = -||eps_theta(u) - eps||^2, a CPO example gives
s(x_t, c_w) - s(x_t, c_l) and a DPO example gives s(x_t^w, c) - s(x_t^l, c).
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np

from ..denoiser import ConditionBatch, DenoiserParams, predict_eps
from ..diffcore import no_grad
from ..errors import DatasetMismatchError, ShapeError
from ..losses import CpoBatch, CpoExample, DpoBatch, DpoExample, as_cpo_batch, as_dpo_batch
from ..schedule import NoiseSchedule, default_schedule, q_sample

type Method = Literal["cpo", "dpo"]
type PreferenceBatch = CpoBatch | DpoBatch


def classify(examples: object) -> Method:
    """Which method a record, batch or homogeneous sequence belongs to."""
    if isinstance(examples, (CpoBatch, CpoExample)):
        return "cpo"
    if isinstance(examples, (DpoBatch, DpoExample)):
        return "dpo"
    if isinstance(examples, Sequence) and examples:
        kinds = {classify(e) for e in examples}
        if len(kinds) == 1:
            return kinds.pop()
        raise DatasetMismatchError("batch mixes CPO triplets and DPO pairs")
    raise DatasetMismatchError(f"not a preference example: {type(examples).__name__}")


def as_preference_batch(examples: object) -> PreferenceBatch:
    if classify(examples) == "cpo":
        return as_cpo_batch(examples)  # type: ignore[arg-type]
    return as_dpo_batch(examples)  # type: ignore[arg-type]


def score(
    params: DenoiserParams,
    x_t: np.ndarray,
    c: ConditionBatch,
    t: int | np.ndarray,
    eps: np.ndarray,
    embed_offset: np.ndarray | None = None,
) -> np.ndarray:
    """Per-row s(x_t, c) = -||eps_params(x_t, c, t) - eps||^2."""
    with no_grad():
        pred = predict_eps(params, x_t, t, c, embed_offset=embed_offset).data
    return -np.sum((pred - eps) ** 2, axis=1)


def score_difference(
    theta: DenoiserParams,
    example: object,
    t: int | np.ndarray,
    eps: np.ndarray,
    schedule: NoiseSchedule | None = None,
) -> np.ndarray:
    """
    Per-row score difference Δs with shared (t, eps) across both branches.

    Args:
        theta: The denoiser
        example: A CPO triplet or DPO pair, a sequence of one kind, or a batch
        t: Timestep, scalar or per row
        eps: Noise, one row per example
        schedule: Defaults to the standard linear schedule

    Returns:
        Δs per row, shape (B,).
    """
    batch = as_preference_batch(example)
    sched = schedule or default_schedule()
    eps = np.asarray(eps, dtype=np.float64)
    eps = eps.reshape(1, -1) if eps.ndim == 1 else eps
    if isinstance(batch, CpoBatch):
        if eps.shape != batch.x0.shape:
            raise ShapeError("score_difference", [batch.x0.shape, eps.shape])
        x_t = q_sample(sched, batch.x0, t, eps)
        return score(theta, x_t, batch.c_w, t, eps) - score(theta, x_t, batch.c_l, t, eps)
    if eps.shape != batch.x0_w.shape:
        raise ShapeError("score_difference", [batch.x0_w.shape, eps.shape])
    x_t_w = q_sample(sched, batch.x0_w, t, eps)
    x_t_l = q_sample(sched, batch.x0_l, t, eps)
    return score(theta, x_t_w, batch.c, t, eps) - score(theta, x_t_l, batch.c, t, eps)
