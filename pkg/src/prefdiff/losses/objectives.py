"""
objectives - Pretraining, Diffusion-DPO and CPO losses.

Every loss is the arithmetic mean over the batch of a per-example term, where
squared norms sum over data dimensions. Reference predictions are evaluated
without recording a graph, so the reference never receives a gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..denoiser import Condition, ConditionBatch, DenoiserParams, predict_eps
from ..diffcore import (
    Tensor,
    as_tensor,
    log_sigmoid,
    mean,
    multiply,
    no_grad,
    relu,
    scale,
    sigmoid,
    square,
    stop_gradient,
    subtract,
    tensor_sum,
)
from ..errors import ConditionKindMismatch, ShapeError
from ..schedule import NoiseSchedule, default_schedule, q_sample
from .batches import CpoInput, DpoInput, as_cpo_batch, as_dpo_batch
from .preference import PreferenceConfig

logger = logging.getLogger(__name__)


def _noise_rows(eps: np.ndarray, like: np.ndarray, op: str) -> np.ndarray:
    arr = np.asarray(eps, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape != like.shape:
        raise ShapeError(op, [like.shape, arr.shape], "eps must match x0")
    return arr


def resolve_schedule(
    cfg: PreferenceConfig | None, schedule: NoiseSchedule | None
) -> NoiseSchedule:
    """The explicit schedule, else the default linear schedule of length cfg.T."""
    if schedule is not None:
        return schedule
    return default_schedule() if cfg is None else default_schedule(cfg.T)


def squared_error(
    params: DenoiserParams,
    x_t: np.ndarray | Tensor,
    c: ConditionBatch,
    t: int | np.ndarray,
    eps: np.ndarray,
    use_null: bool | np.ndarray = False,
) -> Tensor:
    """Per-row ||eps - eps_params(x_t, c, t)||^2, shape (B,)."""
    residual = subtract(as_tensor(eps), predict_eps(params, x_t, t, c, use_null=use_null))
    return tensor_sum(square(residual), axis=1)


def reference_error(
    ref: DenoiserParams,
    x_t: np.ndarray | Tensor,
    c: ConditionBatch,
    t: int | np.ndarray,
    eps: np.ndarray,
) -> np.ndarray:
    """squared_error of the frozen reference, as plain values."""
    x = x_t.data if isinstance(x_t, Tensor) else x_t
    with no_grad():
        return squared_error(ref, x, c, t, eps).data


def pretrain_loss(
    theta: DenoiserParams,
    x0: np.ndarray,
    c: Condition | ConditionBatch,
    t: int | np.ndarray,
    eps: np.ndarray,
    schedule: NoiseSchedule | None = None,
    use_null: bool | np.ndarray = False,
) -> Tensor:
    """
    Denoising loss mean ||eps - eps_theta(x_t, c, t)||^2 with x_t from q_sample.

    Args:
        theta: Trainable denoiser
        x0: Clean samples, (B, D) or (D,)
        c: One condition per row
        t: Timestep, scalar or per row
        eps: Noise shaped like x0
        schedule: Defaults to the standard linear schedule
        use_null: Rows trained on the null condition (condition dropout)

    Returns:
        Scalar loss tensor.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x0 = x0.reshape(1, -1) if x0.ndim == 1 else x0
    eps = _noise_rows(eps, x0, "pretrain_loss")
    sched = resolve_schedule(None, schedule)
    x_t = q_sample(sched, x0, t, eps)
    batch = ConditionBatch.coerce(c, x0.shape[0])
    return mean(squared_error(theta, x_t, batch, t, eps, use_null))


@dataclass(frozen=True, eq=False)
class ContrastTerms:
    """
    Per-row contrast terms.

    ``d_theta`` is differentiable in theta; ``d_ref`` is a plain array.
    """

    d_theta: Tensor
    d_ref: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        """d_theta - d_ref as values."""
        return self.d_theta.data - self.d_ref


def contrast_terms(
    theta: DenoiserParams,
    ref: DenoiserParams,
    x_t: np.ndarray,
    c_w: ConditionBatch,
    c_l: ConditionBatch,
    eps: np.ndarray,
    t: int | np.ndarray,
) -> ContrastTerms:
    """
    d = ||eps - eps(x_t, c_w, t)||^2 - ||eps - eps(x_t, c_l, t)||^2 for theta and ref.

    Both condition branches share the same ``x_t``, ``eps`` and ``t``.
    """
    if c_w.kind != c_l.kind:
        raise ConditionKindMismatch(
            f"winning condition is {c_w.kind}, losing condition is {c_l.kind}"
        )
    d_theta = subtract(
        squared_error(theta, x_t, c_w, t, eps), squared_error(theta, x_t, c_l, t, eps)
    )
    d_ref = reference_error(ref, x_t, c_w, t, eps) - reference_error(ref, x_t, c_l, t, eps)
    return ContrastTerms(d_theta=d_theta, d_ref=d_ref)


def cpo_terms(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    schedule: NoiseSchedule | None = None,
    cfg: PreferenceConfig | None = None,
) -> ContrastTerms:
    """Noise the batch's samples once and return their contrast terms."""
    batch = as_cpo_batch(triplet)
    eps = _noise_rows(eps, batch.x0, "cpo_terms")
    x_t = q_sample(resolve_schedule(cfg, schedule), batch.x0, t, eps)
    return contrast_terms(theta, ref, x_t, batch.c_w, batch.c_l, eps, t)


def dpo_inner(
    theta: DenoiserParams,
    ref: DenoiserParams,
    pair: DpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    schedule: NoiseSchedule | None = None,
    cfg: PreferenceConfig | None = None,
) -> Tensor:
    """
    Per-row bracket (e_theta^w - e_ref^w) - (e_theta^l - e_ref^l) of the DPO loss.

    Winner and loser are noised with the same ``eps`` and ``t``.
    """
    batch = as_dpo_batch(pair)
    eps = _noise_rows(eps, batch.x0_w, "dpo_loss")
    sched = resolve_schedule(cfg, schedule)
    x_t_w = q_sample(sched, batch.x0_w, t, eps)
    x_t_l = q_sample(sched, batch.x0_l, t, eps)
    win = subtract(
        squared_error(theta, x_t_w, batch.c, t, eps),
        reference_error(ref, x_t_w, batch.c, t, eps),
    )
    lose = subtract(
        squared_error(theta, x_t_l, batch.c, t, eps),
        reference_error(ref, x_t_l, batch.c, t, eps),
    )
    return subtract(win, lose)


def dpo_loss(
    theta: DenoiserParams,
    ref: DenoiserParams,
    pair: DpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    cfg: PreferenceConfig,
    schedule: NoiseSchedule | None = None,
) -> Tensor:
    """Diffusion-DPO loss mean -log sigmoid(-alpha * inner)."""
    inner = dpo_inner(theta, ref, pair, t, eps, schedule, cfg)
    return scale(mean(log_sigmoid(scale(inner, -cfg.alpha_scale))), -1.0)


def cpo_logsigmoid_loss(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    cfg: PreferenceConfig,
    schedule: NoiseSchedule | None = None,
) -> Tensor:
    """CPO loss mean -log sigmoid(-alpha * (d_theta - d_ref))."""
    terms = cpo_terms(theta, ref, triplet, t, eps, schedule, cfg)
    inner = scale(subtract(terms.d_theta, terms.d_ref), -cfg.alpha_scale)
    return scale(mean(log_sigmoid(inner)), -1.0)


def cpo_weight(terms: ContrastTerms, cfg: PreferenceConfig) -> Tensor:
    """
    The detached scale lambda_CPO multiplying the hinge.

    Starting from theta == ref the contrast scale is zero, so only the sigmoid
    scale moves theta on its own.
    """
    contrast = scale(subtract(terms.d_theta, terms.d_ref), cfg.alpha_scale)
    if cfg.cpo_weight == "sigmoid":
        return stop_gradient(sigmoid(contrast))
    return stop_gradient(contrast)


def cpo_final_loss(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    cfg: PreferenceConfig,
    schedule: NoiseSchedule | None = None,
) -> Tensor:
    """
    Final CPO loss mean lambda_CPO * max(d_theta + m, 0).

    lambda_CPO is detached, so the gradient is lambda_CPO * grad(d_theta) wherever
    the hinge is active. With ``cfg.truncate`` off the hinge is replaced by d_theta.
    """
    terms = cpo_terms(theta, ref, triplet, t, eps, schedule, cfg)
    hinge = relu(terms.d_theta + cfg.margin) if cfg.truncate else terms.d_theta
    return mean(multiply(cpo_weight(terms, cfg), hinge))


def total_loss(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    t_prime: int | np.ndarray,
    eps_prime: np.ndarray,
    cfg: PreferenceConfig,
    schedule: NoiseSchedule | None = None,
) -> Tensor:
    """
    cpo_final_loss plus reg_lambda times the pretraining loss on (x0, c_w).

    ``(t_prime, eps_prime)`` are drawn independently of ``(t, eps)``.
    """
    batch = as_cpo_batch(triplet)
    loss = cpo_final_loss(theta, ref, batch, t, eps, cfg, schedule)
    if cfg.reg_lambda == 0.0:
        return loss
    reg = pretrain_loss(
        theta, batch.x0, batch.c_w, t_prime, eps_prime, resolve_schedule(cfg, schedule)
    )
    return loss + scale(reg, cfg.reg_lambda)


def implicit_accuracy(inner: Tensor | np.ndarray) -> float:
    """
    Fraction of rows whose log-sigmoid argument -alpha * inner is positive.

    ``inner`` is the DPO bracket or d_theta - d_ref for CPO; a row counts when the
    trained model prefers the winner more than the reference does.
    """
    values = inner.data if isinstance(inner, Tensor) else np.asarray(inner)
    return float(np.mean(values < 0.0))
