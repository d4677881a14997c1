"""
verify - Numerical self-checks of the whole stack.

Each check returns one number and compares it with a tolerance. Checks marked
fast finish in well under a second each and make up the quick suite.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial
from typing import Literal

import numpy as np

from ..context import make_rng
from ..denoiser import ArchConfig, ConditionBatch, DenoiserParams, clone_trainable, init_params
from ..diffcore import Tensor, backward, finite_diff_check
from ..losses import (
    CpoBatch,
    DpoBatch,
    PreferenceConfig,
    cpo_final_loss,
    cpo_logsigmoid_loss,
    dpo_loss,
    gradient_identity_check,
    jensen_bound_check,
    pretrain_loss,
    total_loss,
)
from ..schedule import default_schedule, q_sample, sample_timesteps
from ..toyworld import (
    CurationConfig,
    OracleGenerator,
    ToyTask,
    curate_cpo,
    curate_dpo,
    expected_coverage,
    order_stat_probability,
    sample_dataset,
    storage_compute_report,
)

logger = logging.getLogger(__name__)

VERIFY_SEED = 20240601

type Mode = Literal["max", "min"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    mode: Mode

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        return self.value <= self.tolerance if self.mode == "max" else self.value >= self.tolerance

    def line(self) -> str:
        op = "<=" if self.mode == "max" else ">="
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: value={self.value:.6g} tolerance {op} {self.tolerance:g} {status}"


@dataclass(frozen=True)
class Check:
    """A named check; ``run(seed)`` returns the value compared with ``tolerance``."""

    name: str
    run: Callable[[int], float]
    tolerance: float
    mode: Mode = "max"
    fast: bool = True

    def __call__(self, seed: int = VERIFY_SEED) -> CheckResult:
        value = float(self.run(seed))
        return CheckResult(self.name, value, self.tolerance, self.mode)


def _tiny_arch(seed: int, hidden: int = 8, depth: int = 1) -> ArchConfig:
    return ArchConfig.create(
        hidden=hidden, depth=depth, time_dim=2, embed_dim=2, num_classes=4, seed=seed
    )


def _perturbed(base: DenoiserParams, rng: np.random.Generator, scale: float) -> DenoiserParams:
    theta = clone_trainable(base)
    for p in theta.parameters():
        p.data += scale * rng.standard_normal(p.shape)
    return theta


def _instance(
    seed: int, k: int, hidden: int = 8, depth: int = 1, rows: int = 4
) -> tuple[DenoiserParams, DenoiserParams, CpoBatch, DpoBatch, np.random.Generator]:
    rng = make_rng(seed, f"verify/instance/{k}")
    ref = init_params(_tiny_arch(seed + k, hidden, depth))
    theta = _perturbed(ref, rng, 0.05)
    c_w = rng.integers(0, 4, size=rows)
    c_l = (c_w + rng.integers(1, 4, size=rows)) % 4
    triplet = CpoBatch(
        rng.standard_normal((rows, 2)),
        ConditionBatch("discrete", c_w),
        ConditionBatch("discrete", c_l),
    )
    pair = DpoBatch(
        rng.standard_normal((rows, 2)),
        rng.standard_normal((rows, 2)),
        ConditionBatch("discrete", c_w),
    )
    return theta, ref, triplet, pair, rng


def check_closed_form_losses(seed: int) -> float:
    """Deviation of the losses at theta == ref from ln 2, ln 2 and 0."""
    ref = init_params(_tiny_arch(seed))
    theta = clone_trainable(ref)
    _, _, triplet, pair, rng = _instance(seed, 0)
    cfg = PreferenceConfig()
    t = sample_timesteps(rng, default_schedule(), len(triplet))
    eps = rng.standard_normal(triplet.x0.shape)
    final = cpo_final_loss(theta, ref, triplet, t, eps, cfg)
    grads = backward(final, theta.parameters())
    worst_grad = max(float(np.max(np.abs(g.data))) for g in grads.values())
    return max(
        abs(dpo_loss(theta, ref, pair, t, eps, cfg).item() - math.log(2.0)),
        abs(cpo_logsigmoid_loss(theta, ref, triplet, t, eps, cfg).item() - math.log(2.0)),
        abs(final.item()),
        worst_grad,
    )


def check_gradient_identity(seed: int, instances: int = 50) -> float:
    """Worst relative error of the closed-form log-sigmoid CPO gradient."""
    cfg = PreferenceConfig()
    worst = 0.0
    for k in range(instances):
        theta, ref, triplet, _, rng = _instance(seed, k, hidden=16, depth=2)
        t = sample_timesteps(rng, default_schedule(), len(triplet))
        eps = rng.standard_normal(triplet.x0.shape)
        worst = max(worst, gradient_identity_check(theta, ref, triplet, t, eps, cfg))
    return worst


FD_FLOOR = 1e-6


def _ignoring_params(loss: Callable[[], Tensor]) -> Callable[[object], Tensor]:
    return lambda _params: loss()


def check_finite_differences(seed: int, instances: int = 10) -> float:
    """
    Worst finite-difference error over the pretraining, DPO, CPO and total losses.

    The CPO losses are checked under both the contrast and the sigmoid weight.
    """
    cfg = PreferenceConfig()
    weighted = [cfg.replace(cpo_weight=mode) for mode in ("contrast", "sigmoid")]
    sched = default_schedule()
    worst = 0.0
    for k in range(instances):
        theta, ref, triplet, pair, rng = _instance(seed, k, hidden=4, rows=3)
        t = sample_timesteps(rng, sched, len(triplet))
        eps = rng.standard_normal(triplet.x0.shape)
        t2 = sample_timesteps(rng, sched, len(triplet))
        eps2 = rng.standard_normal(triplet.x0.shape)
        losses: list[Callable[[], Tensor]] = [
            partial(pretrain_loss, theta, triplet.x0, triplet.c_w, t, eps, sched),
            partial(dpo_loss, theta, ref, pair, t, eps, cfg, sched),
        ]
        for w in weighted:
            losses.append(partial(cpo_final_loss, theta, ref, triplet, t, eps, w, sched))
            losses.append(partial(total_loss, theta, ref, triplet, t, eps, t2, eps2, w, sched))
        for loss in losses:
            err = finite_diff_check(_ignoring_params(loss), theta.parameters(), floor=FD_FLOOR)
            worst = max(worst, err)
    return worst


def check_diffusion_moments(seed: int, draws: int = 100_000) -> float:
    """Largest |z| of the sample mean and variance of x_t against their closed forms."""
    sched = default_schedule()
    rng = make_rng(seed, "verify/moments")
    x0 = np.array([0.7, -1.3])
    worst = 0.0
    for t in (1, 500, 1000):
        eps = rng.standard_normal((draws, 2))
        x_t = q_sample(sched, np.broadcast_to(x0, (draws, 2)), t, eps)
        a_bar = float(sched.at(sched.alpha_bar, t))
        var_true = 1.0 - a_bar
        mean_z = (x_t.mean(axis=0) - math.sqrt(a_bar) * x0) / math.sqrt(var_true / draws)
        var = x_t.var(axis=0, ddof=1)
        m4 = np.mean((x_t - x_t.mean(axis=0)) ** 4, axis=0)
        var_z = (var - var_true) / np.sqrt((m4 - var**2) / draws)
        worst = max(worst, float(np.max(np.abs(mean_z))), float(np.max(np.abs(var_z))))
    return worst


def check_order_statistics(seed: int, trials: int = 100_000) -> float:
    """|p_hat - 19/21| at n = 20 for uniform and normal draws."""
    target = expected_coverage(20)
    return max(
        abs(order_stat_probability(20, trials, dist, seed) - target)
        for dist in ("uniform", "normal")
    )


def check_storage(seed: int) -> float:
    """Deviation of the reported storage costs from 1.66, 2.66 and 3.66."""
    reported = [
        storage_compute_report("cpo").reported,
        storage_compute_report("dpo").reported,
        storage_compute_report("dpo", include_original=True).reported,
    ]
    return max(abs(a - b) for a, b in zip(reported, (1.66, 2.66, 3.66), strict=True))


def check_compute_ratio(seed: int, sources: int = 30) -> float:
    """|DPO generator calls / CPO generator calls - n_samples| on the same sources."""
    task = ToyTask(num_classes=4)
    config = CurationConfig()
    dataset = sample_dataset(task, sources, seed)
    cpo = curate_cpo(task, OracleGenerator(task), dataset, config, seed)
    dpo = curate_dpo(task, OracleGenerator(task), dataset, config, seed)
    return abs(dpo.stats.generator_calls / cpo.stats.generator_calls - config.n_samples)


def check_jensen(seed: int, perturbations: int = 5, trials: int = 10_000) -> float:
    """Smallest margin / stderr of the Jensen bound over random perturbations."""
    worst = math.inf
    for k in range(perturbations):
        theta, ref, triplet, _, rng = _instance(seed, 100 + k)
        report = jensen_bound_check(theta, ref, triplet, trials, PreferenceConfig(), rng)
        worst = min(worst, report.margin / max(report.stderr, 1e-300))
    return worst


_CHECKS = [
    Check("closed_form_losses", check_closed_form_losses, 1e-12),
    Check("storage_accounting", check_storage, 0.0),
    Check("order_statistics", check_order_statistics, 0.01),
    Check("curation_compute_ratio", check_compute_ratio, 0.0),
    Check("gradient_identity", check_gradient_identity, 1e-6),
    Check("jensen_bound", check_jensen, -3.0, mode="min"),
    Check("diffusion_moments", check_diffusion_moments, 3.0, fast=False),
    Check("finite_differences", check_finite_differences, 1e-4, fast=False),
]


def get_all_checks() -> list[Check]:
    """Every verification check, cheapest first."""
    return list(_CHECKS)


def get_fast_checks() -> list[Check]:
    """Checks that finish in seconds."""
    return [c for c in _CHECKS if c.fast]


def run_checks(checks: list[Check], seed: int = VERIFY_SEED) -> list[CheckResult]:
    results = []
    for check in checks:
        result = check(seed)
        logger.debug("%s", result.line())
        results.append(result)
    return results
