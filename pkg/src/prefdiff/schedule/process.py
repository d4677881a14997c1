"""
process - Forward noising, single reverse steps and the ancestral sampling chain.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from ..diffcore import Tensor, as_tensor, multiply
from ..errors import ShapeError
from .noise import NoiseSchedule

type EpsFn = Callable[[np.ndarray, int], np.ndarray]


def _column(values: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape per-row coefficients so they broadcast against (B, D) data."""
    if values.ndim == 0 or ndim <= 1:
        return values
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(
    schedule: NoiseSchedule,
    x0: np.ndarray | Tensor,
    t: int | np.ndarray,
    eps: np.ndarray | Tensor,
) -> np.ndarray | Tensor:
    """
    Sample x_t from q(x_t | x_0): sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.

    ``t`` may be a scalar or one timestep per row of ``x0``. Tensor inputs give a
    differentiable Tensor result; arrays give an array.
    """
    x0_shape = x0.shape if isinstance(x0, Tensor) else np.shape(x0)
    eps_shape = eps.shape if isinstance(eps, Tensor) else np.shape(eps)
    if tuple(x0_shape) != tuple(eps_shape):
        raise ShapeError("q_sample", [tuple(x0_shape), tuple(eps_shape)], "eps must match x0")

    a_bar = schedule.at(schedule.alpha_bar, t)
    signal = _column(np.sqrt(a_bar), len(x0_shape))
    noise = _column(np.sqrt(1.0 - a_bar), len(x0_shape))

    if isinstance(x0, Tensor) or isinstance(eps, Tensor):
        return multiply(as_tensor(x0), signal) + multiply(as_tensor(eps), noise)
    return signal * np.asarray(x0, dtype=np.float64) + noise * np.asarray(eps, dtype=np.float64)


def posterior_mean(
    schedule: NoiseSchedule, x_t: np.ndarray, t: int | np.ndarray, eps_hat: np.ndarray
) -> np.ndarray:
    """The reverse-step mean given a noise prediction."""
    beta = _column(schedule.at(schedule.beta, t), np.ndim(x_t))
    a_bar = _column(schedule.at(schedule.alpha_bar, t), np.ndim(x_t))
    prefactor = 1.0 / (1.0 - beta) if schedule.unrooted_prefactor else 1.0 / np.sqrt(1.0 - beta)
    return prefactor * (x_t - beta / np.sqrt(1.0 - a_bar) * eps_hat)


def posterior_step(
    schedule: NoiseSchedule,
    x_t: np.ndarray,
    t: int | np.ndarray,
    eps_hat: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """
    One ancestral step x_t -> x_{t-1}.

    Returns the posterior mean plus sqrt(posterior_var_t) * noise; at t = 1 the
    mean is returned and ``noise`` is ignored.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if np.shape(noise) != x_t.shape or np.shape(eps_hat) != x_t.shape:
        raise ShapeError(
            "posterior_step", [x_t.shape, np.shape(eps_hat), np.shape(noise)],
            "eps_hat and noise must match x_t",
        )
    mean = posterior_mean(schedule, x_t, t, eps_hat)
    steps = schedule.check_t(t)
    std = _column(np.sqrt(schedule.at(schedule.posterior_var, t)), x_t.ndim)
    std = np.where(_column(steps, x_t.ndim) > 1, std, 0.0)
    return mean + std * noise


def ancestral_sample(
    eps_fn: EpsFn,
    schedule: NoiseSchedule,
    x_T: np.ndarray,
    step_noise: np.ndarray | None = None,
) -> np.ndarray:
    """
    Run the full T-step reverse chain from ``x_T``.

    Args:
        eps_fn: Noise predictor called as eps_fn(x_t, t)
        schedule: The noise schedule
        x_T: Starting point, usually standard normal
        step_noise: Per-step noise of shape (T, *x_T.shape); row k is used at
            t = T - k. None suppresses the per-step noise.

    Returns:
        The final sample x_0.
    """
    x = np.asarray(x_T, dtype=np.float64).copy()
    if step_noise is not None and step_noise.shape != (schedule.T, *x.shape):
        raise ShapeError("ancestral_sample", [step_noise.shape, (schedule.T, *x.shape)])
    zeros = np.zeros_like(x)
    for k, t in enumerate(range(schedule.T, 0, -1)):
        eps_hat = eps_fn(x, t)
        noise = zeros if step_noise is None else step_noise[k]
        x = posterior_step(schedule, x, t, eps_hat, noise)
    return x
