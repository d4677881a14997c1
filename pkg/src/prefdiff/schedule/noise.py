"""
noise - Noise schedules and the constants derived from them.

Timesteps are 1-based: ``t`` runs over 1..T and ``alpha_bar(0)`` is defined as 1.
Arrays are stored 0-based, so the value for step ``t`` lives at index ``t - 1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from pydantic import Field

from ..config import Settings
from ..errors import ScheduleError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
OMEGA = 0.5


class ScheduleConfig(Settings):
    """Parameters of the linear noise schedule."""

    T: int = Field(default=DEFAULT_T, ge=1, description="Number of diffusion steps.")
    beta_start: float = Field(default=DEFAULT_BETA_START, gt=0.0, lt=1.0)
    beta_end: float = Field(default=DEFAULT_BETA_END, gt=0.0, lt=1.0)
    unrooted_prefactor: bool = Field(
        default=False,
        description=(
            "Use 1/(1-beta_t) instead of 1/sqrt(1-beta_t) as the posterior-mean prefactor."
        ),
    )

    def build(self) -> NoiseSchedule:
        return linear_schedule(
            self.T, self.beta_start, self.beta_end, unrooted_prefactor=self.unrooted_prefactor
        )


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Immutable diffusion constants for t = 1..T."""

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray
    lambda_t: np.ndarray
    omega: float = OMEGA
    unrooted_prefactor: bool = False

    @classmethod
    def from_betas(cls, betas: np.ndarray, unrooted_prefactor: bool = False) -> NoiseSchedule:
        """Build a schedule from an explicit per-step beta array."""
        beta = np.asarray(betas, dtype=np.float64).copy()
        if beta.ndim != 1 or beta.size == 0:
            raise ScheduleError("betas must be a non-empty 1-D array")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ScheduleError("every beta must lie in (0, 1)")
        alpha_bar = np.cumprod(1.0 - beta)
        alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        posterior_var = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
        lambda_t = alpha_bar / (1.0 - alpha_bar)
        for arr in (beta, alpha_bar, posterior_var, lambda_t):
            arr.setflags(write=False)
        schedule = cls(
            T=int(beta.size),
            beta=beta,
            alpha_bar=alpha_bar,
            posterior_var=posterior_var,
            lambda_t=lambda_t,
            unrooted_prefactor=unrooted_prefactor,
        )
        if np.any(np.diff(alpha_bar) >= 0.0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        return schedule

    def check_t(self, t: int | np.ndarray) -> np.ndarray:
        """Validate 1-based timesteps and return them as an int array."""
        arr = np.asarray(t, dtype=np.int64)
        if arr.size == 0 or arr.min() < 1 or arr.max() > self.T:
            raise ScheduleError(f"timestep out of range 1..{self.T}: {t}")
        return arr

    def at(self, values: np.ndarray, t: int | np.ndarray) -> np.ndarray:
        """Look up a per-step array at 1-based ``t``."""
        return values[self.check_t(t) - 1]

    def alpha_bar_prev(self, t: int | np.ndarray) -> np.ndarray:
        """alpha_bar at t - 1, with alpha_bar(0) = 1."""
        idx = self.check_t(t) - 2
        return np.where(idx >= 0, self.alpha_bar[np.maximum(idx, 0)], 1.0)


def linear_schedule(
    T: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
    unrooted_prefactor: bool = False,
) -> NoiseSchedule:
    """
    Linear beta schedule, endpoints inclusive.

    Args:
        T: Number of steps, positive
        beta_start: First beta, in (0, beta_end]
        beta_end: Last beta, below 1
        unrooted_prefactor: Posterior-mean prefactor switch (see ScheduleConfig)

    Returns:
        The populated NoiseSchedule.
    """
    if T < 1:
        raise ScheduleError(f"T must be positive, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, "
            f"beta_end={beta_end}"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule.from_betas(betas, unrooted_prefactor=unrooted_prefactor)


def snr_weight(schedule: NoiseSchedule, t: int) -> tuple[float, float]:
    """Return (lambda_t, omega) with lambda_t = alpha_bar_t / (1 - alpha_bar_t)."""
    return float(schedule.at(schedule.lambda_t, t)), schedule.omega


def sample_timesteps(rng: np.random.Generator, schedule: NoiseSchedule, size: int) -> np.ndarray:
    """Draw ``size`` timesteps uniformly from 1..T."""
    return rng.integers(1, schedule.T + 1, size=size)


@functools.lru_cache(maxsize=8)
def default_schedule(T: int = DEFAULT_T) -> NoiseSchedule:
    """The shared default linear schedule with ``T`` steps."""
    return linear_schedule(T)
