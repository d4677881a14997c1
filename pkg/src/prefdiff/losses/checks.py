"""
checks - Numerical checks of the CPO objective's analytic properties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..denoiser import DenoiserParams
from ..diffcore import (
    backward,
    mean,
    multiply,
    no_grad,
    scale,
    sigmoid,
    stop_gradient,
    subtract,
)
from ..errors import InsufficientDrawsError
from ..schedule import NoiseSchedule, sample_timesteps
from .batches import CpoInput, as_cpo_batch
from .objectives import cpo_logsigmoid_loss, cpo_terms, resolve_schedule
from .preference import PreferenceConfig

logger = logging.getLogger(__name__)

MIN_JENSEN_TRIALS = 1000
RELATIVE_FLOOR = 1e-12


def gradient_identity_check(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    t: int | np.ndarray,
    eps: np.ndarray,
    cfg: PreferenceConfig,
    schedule: NoiseSchedule | None = None,
) -> float:
    """
    Compare the log-sigmoid CPO gradient against its closed form.

    The closed form is alpha * sigmoid(alpha * (d_theta - d_ref)) * grad(d_theta),
    averaged over the batch. The two sides are evaluated on separate graphs.

    Returns:
        Maximum over parameter tensors of ||lhs - rhs|| / (||rhs|| + 1e-12).
    """
    params = theta.parameters()
    lhs = backward(cpo_logsigmoid_loss(theta, ref, triplet, t, eps, cfg, schedule), params)

    terms = cpo_terms(theta, ref, triplet, t, eps, schedule, cfg)
    contrast = scale(subtract(terms.d_theta, terms.d_ref), cfg.alpha_scale)
    weight = stop_gradient(scale(sigmoid(contrast), cfg.alpha_scale))
    rhs = backward(mean(multiply(weight, terms.d_theta)), params)

    worst = 0.0
    for p in params:
        a, b = lhs[p].data, rhs[p].data
        worst = max(worst, float(np.linalg.norm(a - b) / (np.linalg.norm(b) + RELATIVE_FLOOR)))
    return worst


@dataclass(frozen=True)
class JensenReport:
    """Both sides of E[-log sigmoid(inner)] >= -log sigmoid(E[inner])."""

    lhs: float
    """-log sigmoid of the mean inner value."""

    rhs: float
    """Mean of -log sigmoid(inner)."""

    margin: float
    """rhs - lhs."""

    stderr: float
    """Monte Carlo standard error of rhs."""

    trials: int
    holds: bool


def jensen_bound_check(
    theta: DenoiserParams,
    ref: DenoiserParams,
    triplet: CpoInput,
    trials: int,
    cfg: PreferenceConfig,
    rng: np.random.Generator,
    schedule: NoiseSchedule | None = None,
) -> JensenReport:
    """
    Monte Carlo check that moving the expectation inside -log sigmoid lowers it.

    Each trial draws t uniformly on 1..T, fresh Gaussian noise and, for a batch,
    one example uniformly. inner = -alpha * (d_theta - d_ref).

    Raises:
        InsufficientDrawsError: trials below 1000.
    """
    if trials < MIN_JENSEN_TRIALS:
        raise InsufficientDrawsError(trials, MIN_JENSEN_TRIALS)
    sched = resolve_schedule(cfg, schedule)
    batch = as_cpo_batch(triplet)
    rows = rng.integers(0, len(batch), size=trials)
    t = sample_timesteps(rng, sched, trials)
    eps = rng.standard_normal((trials, batch.x0.shape[1]))

    with no_grad():
        terms = cpo_terms(theta, ref, batch.take(rows), t, eps, sched, cfg)
    inner = -cfg.alpha_scale * terms.gap
    per_trial = -special.log_expit(inner)

    lhs = float(-special.log_expit(np.mean(inner)))
    rhs = float(np.mean(per_trial))
    stderr = float(np.std(per_trial, ddof=1) / np.sqrt(trials))
    margin = rhs - lhs
    holds = margin >= -3.0 * stderr
    if not holds:
        logger.warning("Jensen bound violated: margin %.3e, stderr %.3e", margin, stderr)
    return JensenReport(lhs=lhs, rhs=rhs, margin=margin, stderr=stderr, trials=trials, holds=holds)
