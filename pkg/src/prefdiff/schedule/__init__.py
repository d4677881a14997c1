"""Noise schedules and the diffusion forward/reverse processes."""

from .noise import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_T,
    OMEGA,
    NoiseSchedule,
    ScheduleConfig,
    default_schedule,
    linear_schedule,
    sample_timesteps,
    snr_weight,
)
from .process import EpsFn, ancestral_sample, posterior_mean, posterior_step, q_sample

__all__ = [
    "NoiseSchedule",
    "ScheduleConfig",
    "linear_schedule",
    "default_schedule",
    "snr_weight",
    "sample_timesteps",
    "q_sample",
    "posterior_mean",
    "posterior_step",
    "ancestral_sample",
    "EpsFn",
    "DEFAULT_T",
    "DEFAULT_BETA_START",
    "DEFAULT_BETA_END",
    "OMEGA",
]
