"""
empirical - Monte Carlo variance of the score difference over curated datasets.

Draw k uses example k mod n, a timestep from the timestep policy and fresh noise.
Draws come from the ``variance/draws`` stream of the seed, so two datasets of the
same size compared under one seed see identical (t, eps) draws.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from pydantic import Field

from ..config import Settings
from ..context import make_rng
from ..denoiser import ConditionBatch, DenoiserParams
from ..errors import InsufficientDrawsError
from ..losses import CpoBatch, as_cpo_batch
from ..schedule import NoiseSchedule, default_schedule, q_sample, sample_timesteps
from .scores import Method, as_preference_batch, classify, score, score_difference

logger = logging.getLogger(__name__)

MIN_DRAWS = 1000
DEFAULT_T_STAR = 500
DEFAULT_T_BINS = 10
GRADIENT_STEP = 1e-4

type TimestepPolicy = Literal["fixed", "uniform"]


class VarianceConfig(Settings):
    """Parameters of the variance experiments."""

    n_draws: int = Field(default=4000, ge=MIN_DRAWS, description="Monte Carlo draws per dataset.")
    t_policy: TimestepPolicy = Field(default="fixed")
    t_star: int = Field(default=DEFAULT_T_STAR, ge=1, description="Timestep of the fixed policy.")
    t_bins: int = Field(default=DEFAULT_T_BINS, ge=1, description="Bins for variance given t.")


@dataclass(frozen=True)
class VarianceEstimate:
    """Variance of Δs over one dataset."""

    method: Method
    variance: float
    """Pooled sample variance over every draw."""

    stderr: float
    """Standard error of ``variance`` from the fourth central moment."""

    between: float
    """Variance of the per-example mean Δs."""

    within: float
    """Mean over examples of the variance of Δs across (t, eps) draws."""

    conditional_on_t: float
    """Mean of the variance within equal-width timestep bins."""

    mean: float
    n_draws: int
    n_examples: int
    t_policy: TimestepPolicy


@dataclass(frozen=True)
class Decomposition:
    """Quadratic-form components of Var[Δs]; see decomposition_estimate."""

    v_ctrl: float
    v_nuis: float
    v_cross: float
    v_joint: float
    stderr_ctrl: float
    stderr_nuis: float
    stderr_cross: float
    stderr_joint: float
    n: int

    @property
    def total(self) -> float:
        return self.v_ctrl + self.v_nuis + 2.0 * self.v_cross


@dataclass
class VarianceReport:
    """Variance of Δs under CPO and/or DPO data."""

    n_samples: int
    seed: int
    var_cpo: float | None = None
    var_dpo: float | None = None
    stderr_cpo: float | None = None
    stderr_dpo: float | None = None
    t_star: int | None = None
    decomposition: Decomposition | None = None
    gradient_norm_proxy: float | None = None
    estimates: dict[str, VarianceEstimate] = field(default_factory=dict)

    @property
    def ordered(self) -> bool:
        """True when both variances are present and CPO's is the smaller."""
        if self.var_cpo is None or self.var_dpo is None:
            return False
        return self.var_cpo < self.var_dpo

    def add(self, estimate: VarianceEstimate) -> None:
        self.estimates[estimate.method] = estimate
        if estimate.method == "cpo":
            self.var_cpo, self.stderr_cpo = estimate.variance, estimate.stderr
        else:
            self.var_dpo, self.stderr_dpo = estimate.variance, estimate.stderr

    def to_record(self) -> dict[str, float | int]:
        """Flat key-value view for the metrics log; absent values are omitted."""
        flat: dict[str, float | int] = {"n_samples": self.n_samples, "seed": self.seed}
        for key in ("var_cpo", "var_dpo", "stderr_cpo", "stderr_dpo", "t_star"):
            value = getattr(self, key)
            if value is not None:
                flat[key] = value
        if self.gradient_norm_proxy is not None:
            flat["gradient_norm_proxy"] = self.gradient_norm_proxy
        if self.decomposition is not None:
            for key, value in asdict(self.decomposition).items():
                flat[f"decomposition.{key}"] = value
        for method, est in sorted(self.estimates.items()):
            for key in ("between", "within", "conditional_on_t", "mean"):
                flat[f"{method}.{key}"] = getattr(est, key)
        return flat


def variance_stderr(values: np.ndarray) -> tuple[float, float]:
    """Sample variance (ddof=1) and its standard error sqrt((m4 - s^4) / n)."""
    n = values.size
    var = float(np.var(values, ddof=1))
    m4 = float(np.mean((values - values.mean()) ** 4))
    return var, float(np.sqrt(max(m4 - var * var, 0.0) / n))


def _grouped_variance(values: np.ndarray, groups: np.ndarray) -> tuple[float, float]:
    """(variance of group means, mean within-group variance) over groups of size >= 2."""
    labels, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=values)
    means = sums / counts
    sq = np.bincount(inverse, weights=(values - means[inverse]) ** 2)
    usable = counts >= 2
    within = float(np.mean(sq[usable] / (counts[usable] - 1))) if usable.any() else 0.0
    between = float(np.var(means, ddof=1)) if labels.size >= 2 else 0.0
    return between, within


def _draw_timesteps(
    rng: np.random.Generator,
    schedule: NoiseSchedule,
    policy: TimestepPolicy,
    t_star: int,
    n: int,
) -> np.ndarray:
    if policy == "fixed":
        schedule.check_t(t_star)
        return np.full(n, t_star, dtype=np.int64)
    return sample_timesteps(rng, schedule, n)


def empirical_variance(
    theta: DenoiserParams,
    dataset: object,
    t_policy: TimestepPolicy,
    n_draws: int,
    seed: int,
    t_star: int = DEFAULT_T_STAR,
    schedule: NoiseSchedule | None = None,
    t_bins: int = DEFAULT_T_BINS,
) -> VarianceReport:
    """
    Sample variance of Δs across examples and (t, eps) draws.

    Args:
        theta: The denoiser
        dataset: Homogeneous CPO triplets or DPO pairs
        t_policy: ``fixed`` (every draw at ``t_star``) or ``uniform``
        n_draws: Number of draws, at least 1000
        seed: Seed of the draw stream
        t_star: Timestep of the fixed policy
        schedule: Defaults to the standard linear schedule
        t_bins: Equal-width bins for the variance conditional on t

    Returns:
        A report with the dataset's variance filled in.
    """
    estimate = estimate_variance(theta, dataset, t_policy, n_draws, seed, t_star, schedule, t_bins)
    report = VarianceReport(
        n_samples=n_draws, seed=seed, t_star=t_star if t_policy == "fixed" else None
    )
    report.add(estimate)
    return report


def estimate_variance(
    theta: DenoiserParams,
    dataset: object,
    t_policy: TimestepPolicy,
    n_draws: int,
    seed: int,
    t_star: int = DEFAULT_T_STAR,
    schedule: NoiseSchedule | None = None,
    t_bins: int = DEFAULT_T_BINS,
) -> VarianceEstimate:
    """The VarianceEstimate behind empirical_variance."""
    if n_draws < MIN_DRAWS:
        raise InsufficientDrawsError(n_draws, MIN_DRAWS)
    method = classify(dataset)
    batch = as_preference_batch(dataset)
    sched = schedule or default_schedule()
    n_examples = len(batch)

    rng = make_rng(seed, "variance/draws")
    t = _draw_timesteps(rng, sched, t_policy, t_star, n_draws)
    rows = np.arange(n_draws) % n_examples
    data_dim = (batch.x0 if isinstance(batch, CpoBatch) else batch.x0_w).shape[1]
    eps = rng.standard_normal((n_draws, data_dim))

    deltas = score_difference(theta, batch.take(rows), t, eps, sched)
    variance, stderr = variance_stderr(deltas)
    between, within = _grouped_variance(deltas, rows)

    edges = np.linspace(1, sched.T + 1, t_bins + 1)
    t_bin = np.clip(np.digitize(t, edges) - 1, 0, t_bins - 1)
    _, conditional = _grouped_variance(deltas, t_bin)

    logger.debug("Var[Δs] (%s): %.6g ± %.2g over %d draws", method, variance, stderr, n_draws)
    return VarianceEstimate(
        method=method,
        variance=variance,
        stderr=stderr,
        between=between,
        within=within,
        conditional_on_t=conditional,
        mean=float(deltas.mean()),
        n_draws=n_draws,
        n_examples=n_examples,
        t_policy=t_policy,
    )


def gradient_norm_proxy(
    theta: DenoiserParams,
    x: np.ndarray,
    c: ConditionBatch,
    t: int,
    eps: np.ndarray,
    step: float = GRADIENT_STEP,
) -> float:
    """
    Norm of the input gradient of s(x, c) at one point, by central differences.

    Each coordinate of ``x`` is perturbed by ±step.
    """
    base = np.asarray(x, dtype=np.float64).reshape(1, -1)
    eps = np.asarray(eps, dtype=np.float64).reshape(1, -1)
    dim = base.shape[1]
    offsets = step * np.eye(dim)
    points = np.concatenate([base + offsets, base - offsets])
    rows = np.zeros(2 * dim, dtype=np.int64)
    values = score(theta, points, c.take(rows), t, np.repeat(eps, 2 * dim, axis=0))
    grad = (values[:dim] - values[dim:]) / (2.0 * step)
    return float(np.linalg.norm(grad))


def matched_variance_comparison(
    theta: DenoiserParams,
    cpo_set: object,
    dpo_set: object,
    t_star: int,
    n_draws: int,
    seed: int,
    schedule: NoiseSchedule | None = None,
) -> VarianceReport:
    """
    Var[Δs] under CPO and DPO data at one fixed timestep with shared draws.

    Both datasets should be curated from the same base model and source examples.
    The gradient-norm proxy is taken at the first CPO example, noised at t_star
    with the first shared noise draw.
    """
    if classify(cpo_set) != "cpo" or classify(dpo_set) != "dpo":
        raise ValueError("matched_variance_comparison needs a CPO set, then a DPO set")
    sched = schedule or default_schedule()
    report = VarianceReport(n_samples=n_draws, seed=seed, t_star=t_star)
    for dataset in (cpo_set, dpo_set):
        report.add(estimate_variance(theta, dataset, "fixed", n_draws, seed, t_star, sched))

    cpo = as_cpo_batch(cpo_set)  # type: ignore[arg-type]
    eps = make_rng(seed, "variance/baseline").standard_normal(cpo.x0.shape[1])
    x_t = q_sample(sched, cpo.x0[0], t_star, eps)
    report.gradient_norm_proxy = gradient_norm_proxy(
        theta, x_t, cpo.c_w.take(np.array([0])), t_star, eps
    )

    logger.info(
        "Var[Δs] at t=%d: cpo %.6g ± %.2g, dpo %.6g ± %.2g",
        t_star,
        report.var_cpo,
        report.stderr_cpo,
        report.var_dpo,
        report.stderr_dpo,
    )
    return report
