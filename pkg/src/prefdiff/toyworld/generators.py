"""
generators - Sample generators used by curation and evaluation.

Every generator draws one sample per requested condition and counts its calls.
Randomness comes from one generator per row, so a row's sample does not depend on
which other rows share its chunk or on how chunks are spread over workers.
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, runtime_checkable

import numpy as np

from ..context import make_rng
from ..denoiser import ConditionBatch, DenoiserParams, eps_fn_for
from ..errors import NonFiniteError
from ..schedule import NoiseSchedule, ancestral_sample
from .task import ToyTask, sample_given

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 64


@runtime_checkable
class SampleGenerator(Protocol):
    """Draws one sample per condition row."""

    @property
    def calls(self) -> int:
        """Number of samples generated so far."""
        ...

    def generate(self, c: ConditionBatch, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        """Return an array of shape (len(c), data_dim)."""
        ...


class _CountingGenerator:
    def __init__(self) -> None:
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def _count(self, n: int) -> None:
        with self._lock:
            self._calls += n

    def reset(self) -> None:
        with self._lock:
            self._calls = 0


class OracleGenerator(_CountingGenerator):
    """Samples the task's true conditional distribution."""

    def __init__(self, task: ToyTask):
        super().__init__()
        self.task = task

    def generate(self, c: ConditionBatch, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        self._count(len(c))
        rows = [sample_given(self.task, c.take(np.array([i])), rng) for i, rng in enumerate(rngs)]
        return np.concatenate(rows)


class NoiseGenerator(_CountingGenerator):
    """Ignores the condition and returns isotropic Gaussian noise."""

    def __init__(self, data_dim: int = 2, scale: float = 1.0):
        super().__init__()
        self.data_dim = data_dim
        self.scale = scale

    def generate(self, c: ConditionBatch, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        self._count(len(c))
        return np.stack([self.scale * rng.standard_normal(self.data_dim) for rng in rngs])


class DiffusionGenerator(_CountingGenerator):
    """
    Full ancestral sampling from a denoiser with classifier-free guidance.

    Each row draws a (T + 1, D) block of standard normals: row 0 is x_T, the rest
    is the per-step noise from t = T down to t = 1. A chain that diverges yields a
    NaN row; the other rows of its chunk are kept.
    """

    def __init__(self, params: DenoiserParams, schedule: NoiseSchedule, guidance_w: float = 1.0):
        super().__init__()
        self.params = params
        self.schedule = schedule
        self.guidance_w = guidance_w

    def generate(self, c: ConditionBatch, rngs: Sequence[np.random.Generator]) -> np.ndarray:
        self._count(len(c))
        dim = self.params.arch.data_dim
        noise = np.stack([rng.standard_normal((self.schedule.T + 1, dim)) for rng in rngs])
        x_T = noise[:, 0]
        step_noise = np.ascontiguousarray(noise[:, 1:].transpose(1, 0, 2))
        eps_fn = eps_fn_for(self.params, c, self.guidance_w)
        try:
            return ancestral_sample(eps_fn, self.schedule, x_T, step_noise)
        except NonFiniteError:
            logger.debug("Chunk of %d rows diverged; sampling rows one by one", len(c))

        out = np.full((len(c), dim), np.nan)
        for i in range(len(c)):
            row_fn = eps_fn_for(self.params, c.take(np.array([i])), self.guidance_w)
            try:
                out[i] = ancestral_sample(
                    row_fn, self.schedule, x_T[i : i + 1], step_noise[:, i : i + 1]
                )[0]
            except NonFiniteError:
                continue
        lost = int(np.sum(~np.all(np.isfinite(out), axis=1)))
        logger.warning("Sampling chain diverged; marking %d of %d rows non-finite", lost, len(c))
        return out


def generate_rows(
    generator: SampleGenerator,
    c: ConditionBatch,
    stream_names: Sequence[str],
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> np.ndarray:
    """
    Generate one sample per row, each row seeded from its own named stream.

    Rows are processed in fixed-size chunks; chunks may run on several threads.
    The result is identical for any ``workers`` value.

    Args:
        generator: The sample generator
        c: One condition per row
        stream_names: One stream name per row
        seed: Global seed the streams derive from
        chunk_size: Rows per generator call
        workers: Number of threads

    Returns:
        Samples of shape (len(c), data_dim); rows may be non-finite.
    """
    if len(stream_names) != len(c):
        raise ValueError(f"{len(stream_names)} stream names for {len(c)} rows")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    starts = list(range(0, len(c), chunk_size))

    def run(start: int) -> np.ndarray:
        index = np.arange(start, min(start + chunk_size, len(c)))
        rngs = [make_rng(seed, stream_names[i]) for i in index]
        with np.errstate(all="ignore"):
            return generator.generate(c.take(index), rngs)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, starts))
    else:
        chunks = [run(s) for s in starts]
    logger.debug("Generated %d rows in %d chunks", len(c), len(starts))
    return np.concatenate(chunks, axis=0)
