"""
decomposition - Separating control and nuisance contributions to Var[Δs].

Each branch input is a shared baseline plus a control deviation and a nuisance
deviation, u± = u + d_ctrl± + d_nuis±. Control deviations move the condition
vector of a continuously conditioned denoiser and the condition embedding of a
discrete one; nuisance deviations move the noisy sample. Synthetic generators let each factor
be switched on alone, which real curated data does not allow.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..context import make_rng
from ..denoiser import Condition, ConditionBatch, DenoiserParams
from ..errors import DegenerateFactorError, InsufficientDrawsError
from .empirical import Decomposition, variance_stderr
from .scores import score

logger = logging.getLogger(__name__)

MIN_DECOMPOSITION_DRAWS = 1000

type DeviationGenerator = Callable[[np.random.Generator, int], np.ndarray]


def gaussian_factor(
    scale: float, dim: int, direction: np.ndarray | None = None
) -> DeviationGenerator:
    """
    Isotropic Gaussian deviations of std ``scale``, or scalar Gaussian multiples
    of ``direction`` when one is given.
    """

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        if direction is None:
            return scale * rng.standard_normal((n, dim))
        return scale * rng.standard_normal((n, 1)) * np.asarray(direction, dtype=np.float64)

    return draw


@dataclass(frozen=True, eq=False)
class ControlledFactors:
    """Baseline input and the synthetic deviation generators."""

    x: np.ndarray
    """Baseline noisy sample x_t, shape (D,)."""

    c: Condition
    t: int
    eps: np.ndarray
    """Noise target shared by both branches, shape (D,)."""

    ctrl: DeviationGenerator | None
    """Control deviations; None disables the factor."""

    nuis: DeviationGenerator | None
    """Nuisance deviations; None disables the factor."""


def _draws(
    gen: DeviationGenerator | None, rng: np.random.Generator, n: int, dim: int, name: str
) -> np.ndarray:
    if gen is None:
        return np.zeros((n, dim))
    draws = np.asarray(gen(rng, n), dtype=np.float64).reshape(n, dim)
    if np.all(draws.std(axis=0) == 0.0):
        raise DegenerateFactorError(f"{name} generator produced zero-variance deviations")
    return draws


def decomposition_estimate(
    theta: DenoiserParams,
    factors: ControlledFactors,
    n: int,
    seed: int,
) -> Decomposition:
    """
    Estimate the control, nuisance and cross components of Var[Δs].

    The same deviation draws are reused for the control-only, nuisance-only and
    joint evaluations, and v_cross = (Var[joint] - Var[ctrl] - Var[nuis]) / 2.

    Args:
        theta: The denoiser
        factors: Baseline input and factor generators
        n: Number of draws, at least 1000
        seed: Seed of the ``variance/decomposition`` stream

    Returns:
        The Decomposition with standard errors.

    Raises:
        DegenerateFactorError: an enabled generator has zero variance.
    """
    if n < MIN_DECOMPOSITION_DRAWS:
        raise InsufficientDrawsError(n, MIN_DECOMPOSITION_DRAWS)
    rng = make_rng(seed, "variance/decomposition")
    x = np.asarray(factors.x, dtype=np.float64).reshape(-1)
    eps = np.repeat(np.asarray(factors.eps, dtype=np.float64).reshape(1, -1), n, axis=0)
    dim = x.size
    continuous = factors.c.kind == "continuous"
    base_c = factors.c.payload()
    ctrl_dim = base_c.size if continuous else theta.arch.embed_dim

    d_ctrl = [_draws(factors.ctrl, rng, n, ctrl_dim, "control") for _ in range(2)]
    d_nuis = [_draws(factors.nuis, rng, n, dim, "nuisance") for _ in range(2)]

    def branch(ctrl: np.ndarray, nuis: np.ndarray) -> np.ndarray:
        if continuous:
            c = ConditionBatch("continuous", base_c[None, :] + ctrl)
            return score(theta, x[None, :] + nuis, c, factors.t, eps)
        c = ConditionBatch.coerce(factors.c, n)
        return score(theta, x[None, :] + nuis, c, factors.t, eps, embed_offset=ctrl)

    zero_c, zero_n = np.zeros((n, ctrl_dim)), np.zeros((n, dim))
    only_ctrl = np.zeros(n)
    if factors.ctrl is not None:
        only_ctrl = branch(d_ctrl[0], zero_n) - branch(d_ctrl[1], zero_n)
    only_nuis = np.zeros(n)
    if factors.nuis is not None:
        only_nuis = branch(zero_c, d_nuis[0]) - branch(zero_c, d_nuis[1])
    joint = branch(d_ctrl[0], d_nuis[0]) - branch(d_ctrl[1], d_nuis[1])

    v_ctrl, se_ctrl = variance_stderr(only_ctrl)
    v_nuis, se_nuis = variance_stderr(only_nuis)
    v_joint, se_joint = variance_stderr(joint)
    centered = (
        (joint - joint.mean()) ** 2
        - (only_ctrl - only_ctrl.mean()) ** 2
        - (only_nuis - only_nuis.mean()) ** 2
    ) / 2.0
    v_cross = (v_joint - v_ctrl - v_nuis) / 2.0
    se_cross = float(np.std(centered, ddof=1) / np.sqrt(n))

    logger.debug(
        "Decomposition: ctrl %.4g, nuis %.4g, cross %.4g (joint %.4g)",
        v_ctrl,
        v_nuis,
        v_cross,
        v_joint,
    )
    return Decomposition(
        v_ctrl=v_ctrl,
        v_nuis=v_nuis,
        v_cross=v_cross,
        v_joint=v_joint,
        stderr_ctrl=se_ctrl,
        stderr_nuis=se_nuis,
        stderr_cross=se_cross,
        stderr_joint=se_joint,
        n=n,
    )
