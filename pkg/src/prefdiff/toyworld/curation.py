"""
curation - Building CPO triplets and DPO pairs from a base generator.

CPO: one generated sample per source example; its detected condition becomes the
losing condition and the ground truth stays the winning one. DPO: ``n_samples``
generations per source condition, best and worst aligned kept when the winner's
quality beats the loser's by ``delta``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from pydantic import Field

from ..config import Settings
from ..denoiser import Condition, ConditionBatch
from ..errors import DatasetMismatchError
from .generators import DEFAULT_CHUNK_SIZE, SampleGenerator, generate_rows
from .task import (
    LabeledSample,
    ToyTask,
    controllability_score,
    detect_batch,
    quality_proxy,
)

logger = logging.getLogger(__name__)

DEFAULT_N_SAMPLES = 20
DEFAULT_DELTA = 0.05
CURATION_GUIDANCE = 2.0


class CurationConfig(Settings):
    """Parameters of both curation pipelines."""

    n_samples: int = Field(
        default=DEFAULT_N_SAMPLES, ge=2, description="DPO generations per source condition."
    )
    delta: float = Field(
        default=DEFAULT_DELTA, ge=0.0, description="Required quality lead of the DPO winner."
    )
    guidance_w: float = Field(
        default=CURATION_GUIDANCE, ge=0.0, description="Guidance scale of the base generator."
    )
    chunk_size: int = Field(default=DEFAULT_CHUNK_SIZE, ge=1, description="Rows per sampler call.")


@dataclass(frozen=True, eq=False)
class CpoTriplet:
    """A fixed sample with its ground-truth and perturbed conditions."""

    x0: np.ndarray
    c_w: Condition
    c_l: Condition
    source_index: int = 0
    fallback: bool = False
    """c_w came from the detector because no ground truth was available."""


@dataclass(frozen=True, eq=False)
class DpoPair:
    """Best- and worst-aligned generations for one condition."""

    x0_w: np.ndarray
    x0_l: np.ndarray
    c: Condition
    score_w: float
    score_l: float
    quality_w: float
    quality_l: float
    source_index: int = 0


@dataclass
class CurationStats:
    """Counters reported by a curation run."""

    method: str
    sources: int = 0
    generator_calls: int = 0
    retained: int = 0
    filtered: int = 0
    skipped_nonfinite: int = 0
    skipped_ties: int = 0
    fallback_conditions: int = 0

    def summary(self) -> str:
        return (
            f"{self.method}: sources={self.sources} calls={self.generator_calls} "
            f"retained={self.retained} filtered={self.filtered} "
            f"nonfinite={self.skipped_nonfinite} ties={self.skipped_ties} "
            f"fallback={self.fallback_conditions}"
        )


@dataclass
class CpoCuration:
    records: list[CpoTriplet]
    stats: CurationStats = field(default_factory=lambda: CurationStats("cpo"))


@dataclass
class DpoCuration:
    records: list[DpoPair]
    stats: CurationStats = field(default_factory=lambda: CurationStats("dpo"))


def _ground_truth(
    task: ToyTask, dataset: Sequence[LabeledSample]
) -> tuple[ConditionBatch, np.ndarray]:
    """Conditions of the dataset with missing ones filled in by the detector."""
    missing = np.array([s.c is None for s in dataset])
    detected = detect_batch(task, np.stack([s.x0 for s in dataset])).to_conditions()
    conditions = [detected[i] if s.c is None else s.c for i, s in enumerate(dataset)]
    batch = ConditionBatch.from_conditions(conditions)
    if batch.kind != task.condition_kind:
        raise DatasetMismatchError(
            f"dataset holds {batch.kind} conditions, task expects {task.condition_kind}"
        )
    return batch, missing


def curate_cpo(
    task: ToyTask,
    generator: SampleGenerator,
    dataset: Sequence[LabeledSample],
    config: CurationConfig,
    seed: int,
    workers: int = 1,
) -> CpoCuration:
    """
    Curate CPO triplets with exactly one generation per source example.

    For each (x0, c): generate one sample conditioned on c, set c_w = c and
    c_l = R(sample), keep the triplet when c_l differs from c_w. Source examples
    without a ground-truth condition use c_w = R(x0). Non-finite generations are
    skipped and counted.

    Args:
        task: The toy task
        generator: Base generator G
        dataset: Source examples
        config: Curation parameters
        seed: Global seed; example i samples from stream ``curate/cpo/item/{i}``
        workers: Thread hint

    Returns:
        The retained triplets with their counters.
    """
    if not dataset:
        raise DatasetMismatchError("cannot curate an empty dataset")
    c_w, missing = _ground_truth(task, dataset)
    names = [f"curate/cpo/item/{i}" for i in range(len(dataset))]
    before = generator.calls
    samples = generate_rows(generator, c_w, names, seed, config.chunk_size, workers)

    stats = CurationStats("cpo", sources=len(dataset))
    stats.generator_calls = generator.calls - before
    stats.fallback_conditions = int(missing.sum())

    finite = np.all(np.isfinite(samples), axis=1)
    stats.skipped_nonfinite = int((~finite).sum())
    c_l = np.full(len(dataset), None, dtype=object)
    if finite.any():
        c_l[finite] = detect_batch(task, samples[finite]).to_conditions()

    winners = c_w.to_conditions()
    records: list[CpoTriplet] = []
    for i, sample in enumerate(dataset):
        if not finite[i]:
            continue
        if c_l[i] == winners[i]:
            stats.filtered += 1
            continue
        records.append(
            CpoTriplet(
                x0=sample.x0.copy(),
                c_w=winners[i],
                c_l=c_l[i],
                source_index=sample.index,
                fallback=bool(missing[i]),
            )
        )
    stats.retained = len(records)
    logger.info("Curation %s", stats.summary())
    return CpoCuration(records=records, stats=stats)


def curate_dpo(
    task: ToyTask,
    generator: SampleGenerator,
    dataset: Sequence[LabeledSample],
    config: CurationConfig,
    seed: int,
    workers: int = 1,
) -> DpoCuration:
    """
    Curate DPO pairs by best-of-N selection with a quality filter.

    Per source condition: generate ``n_samples`` candidates, score controllability,
    take the argmax as winner and the argmin as loser, and keep the pair only when
    quality_w >= quality_l + delta, so delta = 0 still requires quality_w >= quality_l.
    All-tied scores skip the example.

    Args:
        task: The toy task
        generator: Base generator G
        dataset: Source examples (their conditions are the prompts)
        config: Curation parameters
        seed: Global seed; candidate j of example i samples from stream
            ``curate/dpo/item/{i}/sample/{j}``
        workers: Thread hint

    Returns:
        The retained pairs with their counters.
    """
    if not dataset:
        raise DatasetMismatchError("cannot curate an empty dataset")
    c, _ = _ground_truth(task, dataset)
    n = config.n_samples
    rows = np.repeat(np.arange(len(dataset)), n)
    names = [f"curate/dpo/item/{i}/sample/{j}" for i in range(len(dataset)) for j in range(n)]
    before = generator.calls
    samples = generate_rows(generator, c.take(rows), names, seed, config.chunk_size, workers)

    stats = CurationStats("dpo", sources=len(dataset))
    stats.generator_calls = generator.calls - before

    candidates = samples.reshape(len(dataset), n, -1)
    prompts = c.to_conditions()
    records: list[DpoPair] = []
    for i, sample in enumerate(dataset):
        block = candidates[i]
        finite = np.all(np.isfinite(block), axis=1)
        if finite.sum() < 2:
            stats.skipped_nonfinite += 1
            continue
        block = block[finite]
        requested = c.take(np.full(len(block), i))
        scores = controllability_score(task, block, requested)
        if np.all(scores == scores[0]):
            stats.skipped_ties += 1
            continue
        w, lo = int(np.argmax(scores)), int(np.argmin(scores))
        quality = quality_proxy(task, block)
        if quality[w] < quality[lo] + config.delta:
            stats.filtered += 1
            continue
        records.append(
            DpoPair(
                x0_w=block[w].copy(),
                x0_l=block[lo].copy(),
                c=prompts[i],
                score_w=float(scores[w]),
                score_l=float(scores[lo]),
                quality_w=float(quality[w]),
                quality_l=float(quality[lo]),
                source_index=sample.index,
            )
        )
    stats.retained = len(records)
    logger.info("Curation %s", stats.summary())
    return DpoCuration(records=records, stats=stats)
