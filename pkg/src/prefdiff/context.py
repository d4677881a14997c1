"""
RunContext - Runtime context shared by every prefdiff operation.

This module provides the context object that carries the global seed, the
deterministic-mode flag, the worker hint and the output directory. All randomness
is drawn from named sub-streams of the global seed so results never depend on how
work is scheduled across workers.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

THREADS_ENV = "PREFDIFF_THREADS"


def env_workers(default: int = 1) -> int:
    """Worker hint from PREFDIFF_THREADS, else ``default``."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, default)


def stream_seed(seed: int, name: str) -> np.random.SeedSequence:
    """
    Derive the seed sequence for a named sub-stream.

    Args:
        seed: The global seed
        name: Stream name, e.g. ``"curate/item/17"``

    Returns:
        A SeedSequence that depends only on (seed, name).
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *words])


def make_rng(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for the named sub-stream of ``seed``."""
    return np.random.default_rng(stream_seed(seed, name))


@dataclass
class RunContext:
    """
    Runtime context for prefdiff runs.

    Example:
        ```python
        ctx = RunContext(seed=7, out_dir=Path("runs/a"))
        rng = ctx.stream("curate/item/17")
        ```
    """

    seed: int = 0
    """Global seed; every random stream is derived from it."""

    deterministic: bool = True
    """Force single-threaded reductions so results are bit-reproducible."""

    workers: int = field(default_factory=env_workers)
    """Worker hint for embarrassingly parallel loops. PREFDIFF_THREADS overrides."""

    out_dir: Path | None = None
    """Directory for checkpoints, datasets and metrics logs."""

    run_id: str = "run"
    """Identifier written into every metrics record."""

    debug: bool = False
    """Screen every autodiff result for NaN/Inf (see diffcore.debug_mode)."""

    def stream(self, name: str) -> np.random.Generator:
        """Return the generator for a named sub-stream of the global seed."""
        return make_rng(self.seed, name)

    def effective_workers(self) -> int:
        """Number of workers to actually use; 1 in deterministic mode."""
        return 1 if self.deterministic else max(1, self.workers)

    def output_path(self, name: str) -> Path:
        """Resolve a file inside the output directory, creating the directory."""
        if self.out_dir is None:
            raise ValueError("RunContext.out_dir is not set")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name
