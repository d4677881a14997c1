"""
prefdiff - Preference optimization of conditional diffusion models at desk scale.

The package trains a small conditional denoiser on a 2-D controllable-generation
task, curates preference data two ways (CPO triplets over conditions, DPO pairs
over samples), fine-tunes with either objective and measures controllability,
distribution quality and the variance of the preference signal.

Example:
    ```python
    from prefdiff.toyworld import ToyTask
    from prefdiff.trainer import TrainConfig, evaluate, train_base

    task = ToyTask()
    base = train_base(task, TrainConfig(steps=500))
    print(evaluate(base, task, n_samples=200, guidance_w=2.0, seed=0))
    ```
"""

from .context import RunContext, make_rng
from .errors import (
    CheckpointFormatError,
    ConfigError,
    ConfigMigrationError,
    DatasetMismatchError,
    DegenerateFactorError,
    InsufficientDrawsError,
    PrefDiffError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "RunContext",
    "make_rng",
    # Errors
    "PrefDiffError",
    "ConfigError",
    "ConfigMigrationError",
    "DatasetMismatchError",
    "TrainingDivergedError",
    "InsufficientDrawsError",
    "DegenerateFactorError",
    "CheckpointFormatError",
]
