"""
evaluate - Controllability, error rate and MMD of a generator on the toy task.

Conditions, generation noise and the real comparison set all come from named
streams of the evaluation seed. Two evaluations with the same seed therefore see
identical condition lists, which makes guidance sweeps a paired design.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import Field
from scipy.spatial.distance import cdist, pdist

from ..config import Settings
from ..context import make_rng
from ..denoiser import DenoiserParams
from ..errors import ConfigError, InsufficientDrawsError
from ..schedule import NoiseSchedule, default_schedule
from ..toyworld import (
    DiffusionGenerator,
    SampleGenerator,
    ToyTask,
    detect_batch,
    generate_rows,
    matches,
    sample_conditions,
    sample_given,
)

logger = logging.getLogger(__name__)

MIN_EVAL_SAMPLES = 100
MATCHED_CONTROLLABILITY = 0.02


class EvalConfig(Settings):
    """Evaluation settings."""

    n_samples: int = Field(default=500, ge=MIN_EVAL_SAMPLES)
    guidance_w: float = Field(default=1.0, ge=0.0, description="Classifier-free guidance scale.")
    cfg_scales: list[float] = Field(
        default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0, 6.0],
        description="Scales of the guidance sweep.",
    )


@dataclass(frozen=True)
class EvalReport:
    """Controllability and distribution quality of one generator."""

    controllability: float
    """Fraction of finite generations whose detected condition matches the request."""

    oracle_controllability: float
    """Detector accuracy on real samples for the same conditions."""

    error_rate: float
    """oracle_controllability - controllability (absolute)."""

    mmd: float
    guidance_w: float
    n_samples: int
    seed: int
    n_nonfinite: int = 0
    conditions_digest: str = ""

    def to_record(self) -> dict[str, float]:
        return {
            "controllability": self.controllability,
            "oracle_controllability": self.oracle_controllability,
            "error_rate": self.error_rate,
            "mmd": self.mmd,
            "n_nonfinite": float(self.n_nonfinite),
        }


def median_bandwidth(x: np.ndarray) -> float:
    """Median pairwise Euclidean distance, or 1.0 when all points coincide."""
    dists = pdist(np.asarray(x, dtype=np.float64))
    bw = float(np.median(dists)) if dists.size else 0.0
    return bw if bw > 0 else 1.0


def mmd(x: np.ndarray, y: np.ndarray, bandwidth: float | None = None) -> float:
    """
    Unbiased squared MMD with kernel exp(-||a - b||^2 / (2 bw^2)).

    The bandwidth defaults to the median heuristic on ``y``. Values can be slightly
    negative when the two sets come from the same distribution.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, n = len(x), len(y)
    if m < 2 or n < 2:
        raise ValueError("mmd needs at least two points per set")
    bw = median_bandwidth(y) if bandwidth is None else bandwidth

    def kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * cdist(a, b, "sqeuclidean") / bw**2)

    kxx, kyy, kxy = kernel(x, x), kernel(y, y), kernel(x, y)
    xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(xx + yy - 2.0 * kxy.mean())


def _digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()[:16]


def evaluate(
    params: DenoiserParams | SampleGenerator,
    task: ToyTask,
    n_samples: int,
    guidance_w: float,
    seed: int,
    schedule: NoiseSchedule | None = None,
    workers: int = 1,
) -> EvalReport:
    """
    Generate ``n_samples`` samples for uniformly drawn conditions and score them.

    Args:
        params: A denoiser (sampled with the full guided ancestral chain) or any
            sample generator
        task: The toy task
        n_samples: At least 100
        guidance_w: Guidance scale for denoisers
        seed: Evaluation seed
        schedule: Defaults to the standard linear schedule
        workers: Thread hint for sampling

    Returns:
        The EvalReport; non-finite generations are excluded and counted.
    """
    if n_samples < MIN_EVAL_SAMPLES:
        raise InsufficientDrawsError(n_samples, MIN_EVAL_SAMPLES)
    if isinstance(params, DenoiserParams):
        generator: SampleGenerator = DiffusionGenerator(
            params, schedule or default_schedule(), guidance_w
        )
    else:
        generator = params

    conditions = sample_conditions(task, n_samples, make_rng(seed, "eval/conditions"))
    names = [f"eval/sample/{i}" for i in range(n_samples)]
    samples = generate_rows(generator, conditions, names, seed, workers=workers)
    real = sample_given(task, conditions, make_rng(seed, "eval/real"))

    finite = np.all(np.isfinite(samples), axis=1)
    n_nonfinite = int((~finite).sum())
    if n_nonfinite:
        logger.warning("Excluding %d non-finite generations of %d", n_nonfinite, n_samples)

    oracle = float(np.mean(matches(task, detect_batch(task, real), conditions)))
    if finite.sum() >= 2:
        kept = samples[finite]
        hits = matches(task, detect_batch(task, kept), conditions.take(np.flatnonzero(finite)))
        controllability = float(np.mean(hits))
        distance = mmd(kept, real)
    else:
        controllability, distance = 0.0, math.inf
    if controllability > oracle:
        logger.warning(
            "Controllability %.4f exceeds the oracle %.4f", controllability, oracle
        )

    report = EvalReport(
        controllability=controllability,
        oracle_controllability=oracle,
        error_rate=oracle - controllability,
        mmd=distance,
        guidance_w=guidance_w,
        n_samples=n_samples,
        seed=seed,
        n_nonfinite=n_nonfinite,
        conditions_digest=_digest(conditions.values),
    )
    logger.info(
        "Eval w=%g: controllability %.4f, error rate %.4f, mmd %.5f",
        guidance_w,
        report.controllability,
        report.error_rate,
        report.mmd,
    )
    return report


def cfg_sweep(
    params: DenoiserParams,
    task: ToyTask,
    scales: Sequence[float],
    n_samples: int,
    seed: int,
    schedule: NoiseSchedule | None = None,
    workers: int = 1,
) -> list[EvalReport]:
    """One evaluate per guidance scale, all with the same condition draws."""
    if not scales:
        raise ConfigError("cfg_sweep needs at least one scale", keys=["eval.cfg_scales"])
    return [
        evaluate(params, task, n_samples, float(w), seed, schedule, workers) for w in scales
    ]


def relative_error_reduction(before: EvalReport, after: EvalReport) -> float:
    """
    Relative reduction 1 - err_after / err_before of the absolute error rate.

    NaN when the baseline has no error to reduce.
    """
    if before.error_rate <= 0.0:
        return math.nan
    return 1.0 - after.error_rate / before.error_rate


@dataclass(frozen=True)
class TradeoffPoint:
    """A CPO and a DPO checkpoint of matched controllability."""

    cpo_controllability: float
    cpo_mmd: float
    dpo_controllability: float
    dpo_mmd: float

    @property
    def cpo_better(self) -> bool:
        return self.cpo_mmd <= self.dpo_mmd


def tradeoff_comparison(
    cpo_reports: Sequence[EvalReport],
    dpo_reports: Sequence[EvalReport],
    tolerance: float = MATCHED_CONTROLLABILITY,
) -> list[TradeoffPoint]:
    """
    Pair CPO and DPO checkpoints whose controllability differs by at most ``tolerance``.

    Every CPO report is paired with the closest DPO report in controllability;
    reports without a partner inside the tolerance are dropped.
    """
    points: list[TradeoffPoint] = []
    if not dpo_reports:
        return points
    dpo_ctrl = np.array([r.controllability for r in dpo_reports])
    for cpo in cpo_reports:
        gaps = np.abs(dpo_ctrl - cpo.controllability)
        best = int(np.argmin(gaps))
        if gaps[best] > tolerance:
            continue
        dpo = dpo_reports[best]
        points.append(
            TradeoffPoint(
                cpo_controllability=cpo.controllability,
                cpo_mmd=cpo.mmd,
                dpo_controllability=dpo.controllability,
                dpo_mmd=dpo.mmd,
            )
        )
    return points
