"""
train - Base pretraining and DPO/CPO fine-tuning loops.

Both loops are strictly sequential. Step k draws its minibatch, timesteps and
noise from the ``train/{tag}/step/{k}`` stream of the config seed, so a run is
fully determined by (config, seed).
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import Field

from ..config import Settings
from ..context import make_rng
from ..denoiser import (
    ArchConfig,
    DenoiserParams,
    clone_as_reference,
    clone_trainable,
    init_params,
    params_digest,
    save_checkpoint,
)
from ..diffcore import Tensor, backward, no_grad
from ..errors import DatasetMismatchError, NonFiniteError, PrefDiffError, TrainingDivergedError
from ..losses import (
    CpoBatch,
    DpoBatch,
    PreferenceConfig,
    as_cpo_batch,
    as_dpo_batch,
    cpo_terms,
    dpo_inner,
    dpo_loss,
    implicit_accuracy,
    pretrain_loss,
    total_loss,
)
from ..schedule import NoiseSchedule, default_schedule, sample_timesteps
from ..toyworld import CpoTriplet, DpoPair, ToyTask, record_kind, sample_conditions, sample_given
from .metrics import MetricsLog
from .optim import AdamW

try:
    from tqdm import tqdm

    HAS_TQDM = True
except ImportError:
    HAS_TQDM = False

logger = logging.getLogger(__name__)

BASE_LR = 1e-3
FINETUNE_LR = 1e-5

type Method = Literal["cpo", "dpo"]
type SnapshotCallback = Callable[[int, DenoiserParams], None]


class TrainConfig(Settings):
    """Optimizer and loop settings shared by base training and fine-tuning."""

    lr: float = Field(default=BASE_LR, gt=0.0, description="Learning rate.")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0, description="Decoupled weight decay.")
    batch_size: int = Field(default=128, ge=1)
    steps: int = Field(default=3000, ge=0)
    seed: int = Field(default=0)
    preference: PreferenceConfig = Field(default_factory=PreferenceConfig)
    t_policy: Literal["uniform", "fixed"] = Field(default="uniform")
    t_star: int = Field(default=500, ge=1, description="Timestep of the fixed policy.")
    cond_dropout: float = Field(
        default=0.1, ge=0.0, le=1.0, description="Probability of training on the null condition."
    )
    log_every: int = Field(default=100, ge=1)
    checkpoint_every: int = Field(default=0, ge=0, description="0 disables periodic checkpoints.")
    snapshots: int = Field(default=5, ge=0, description="Evenly spaced fine-tuning snapshots.")

    @classmethod
    def for_finetune(cls, **values: object) -> TrainConfig:
        """Fine-tuning defaults: lower learning rate, no condition dropout."""
        merged: dict[str, object] = {"lr": FINETUNE_LR, "steps": 500, "cond_dropout": 0.0}
        merged.update(values)
        return cls.create(**merged)

    def optimizer(self, params: Sequence[Tensor]) -> AdamW:
        return AdamW(
            params, self.lr, (self.beta1, self.beta2), weight_decay=self.weight_decay
        )


def _timesteps(
    config: TrainConfig, rng: np.random.Generator, schedule: NoiseSchedule, n: int
) -> np.ndarray:
    if config.t_policy == "fixed":
        schedule.check_t(config.t_star)
        return np.full(n, config.t_star, dtype=np.int64)
    return sample_timesteps(rng, schedule, n)


def snapshot_steps(steps: int, count: int) -> set[int]:
    """``count`` evenly spaced step numbers in 1..steps, ending at ``steps``."""
    if steps <= 0 or count <= 0:
        return set()
    return {max(1, (k * steps) // count) for k in range(1, count + 1)}


def _progress(steps: int, desc: str, show: bool) -> Iterable[int]:
    if show and HAS_TQDM:
        return tqdm(range(1, steps + 1), desc=desc, unit="step")
    return range(1, steps + 1)


def _optimize(
    theta: DenoiserParams,
    config: TrainConfig,
    tag: str,
    loss_at: Callable[[int, np.random.Generator], Tensor],
    metrics: MetricsLog | None,
    checkpoint_dir: Path | None,
    diagnostics: Callable[[int, np.random.Generator], dict[str, float]] | None = None,
    on_step: Callable[[int], None] | None = None,
    progress: bool = False,
) -> None:
    optimizer = config.optimizer(theta.parameters())
    for step in _progress(config.steps, tag, progress):
        rng = make_rng(config.seed, f"train/{tag}/step/{step}")
        try:
            loss = loss_at(step, rng)
        except NonFiniteError as e:
            raise TrainingDivergedError(step, float("nan")) from e
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergedError(step, value)
        optimizer.step(backward(loss, theta.parameters()))

        if step % config.log_every == 0 or step == config.steps:
            logger.info("%s step %d/%d: loss %.6g", tag, step, config.steps, value)
            if metrics is not None:
                metrics.append(step, f"{tag}/loss", value)
                if diagnostics is not None:
                    extra = diagnostics(step, rng)
                    metrics.extend(step, {f"{tag}/{k}": v for k, v in extra.items()})
        if checkpoint_dir is not None and config.checkpoint_every:
            if step % config.checkpoint_every == 0:
                save_checkpoint(theta, checkpoint_dir / f"{tag}-step{step:06d}.ckpt")
        if on_step is not None:
            on_step(step)


def train_base(
    task: ToyTask,
    config: TrainConfig,
    arch: ArchConfig | None = None,
    schedule: NoiseSchedule | None = None,
    metrics: MetricsLog | None = None,
    checkpoint_dir: str | Path | None = None,
    progress: bool = False,
) -> DenoiserParams:
    """
    Pretrain a conditional denoiser on fresh draws from the task.

    Each step samples ``batch_size`` conditions uniformly, one real sample per
    condition, a timestep and noise; a ``cond_dropout`` share of the rows is
    trained on the null condition so the model supports guidance.

    Args:
        task: The toy task
        config: Loop and optimizer settings
        arch: Denoiser architecture; defaults to ``task.arch(seed=config.seed)``
        schedule: Defaults to the linear schedule of length ``config.preference.T``
        metrics: Optional metrics log
        checkpoint_dir: Directory for periodic checkpoints
        progress: Show a progress bar when tqdm is installed

    Returns:
        The trained parameters.

    Raises:
        TrainingDivergedError: the loss became non-finite.
    """
    arch = arch or task.arch(seed=config.seed)
    sched = schedule or default_schedule(config.preference.T)
    theta = init_params(arch)
    out = Path(checkpoint_dir) if checkpoint_dir is not None else None

    def loss_at(step: int, rng: np.random.Generator) -> Tensor:
        c = sample_conditions(task, config.batch_size, rng)
        x0 = sample_given(task, c, rng)
        t = _timesteps(config, rng, sched, config.batch_size)
        eps = rng.standard_normal(x0.shape)
        drop = rng.random(config.batch_size) < config.cond_dropout
        return pretrain_loss(theta, x0, c, t, eps, sched, use_null=drop)

    logger.info(
        "Base training: %d steps, batch %d, lr %g", config.steps, config.batch_size, config.lr
    )
    _optimize(theta, config, "base", loss_at, metrics, out, progress=progress)
    return theta


def finetune(
    method: Method,
    base: DenoiserParams,
    dataset: Sequence[CpoTriplet] | Sequence[DpoPair],
    config: TrainConfig,
    schedule: NoiseSchedule | None = None,
    metrics: MetricsLog | None = None,
    checkpoint_dir: str | Path | None = None,
    on_snapshot: SnapshotCallback | None = None,
    progress: bool = False,
) -> DenoiserParams:
    """
    Fine-tune a copy of ``base`` with Diffusion-DPO or CPO.

    The reference model is a frozen clone of ``base``. The CPO path minimises
    total_loss with (t', eps') drawn independently of (t, eps); the DPO path
    minimises dpo_loss. Minibatches are drawn with replacement.

    Args:
        method: ``cpo`` or ``dpo``; must match the dataset
        base: The pretrained denoiser; never modified
        dataset: Curated CPO triplets or DPO pairs
        config: Loop, optimizer and preference settings
        schedule: Defaults to the linear schedule of length ``config.preference.T``
        metrics: Optional metrics log; receives loss and implicit accuracy
        checkpoint_dir: Directory for periodic checkpoints
        on_snapshot: Called with (step, frozen copy) at ``config.snapshots``
            evenly spaced steps
        progress: Show a progress bar when tqdm is installed

    Returns:
        The fine-tuned parameters; a copy equal to ``base`` when steps is 0.

    Raises:
        DatasetMismatchError: the dataset does not belong to ``method``.
        TrainingDivergedError: the loss became non-finite.
    """
    kind = record_kind(dataset)
    if kind != method:
        raise DatasetMismatchError(f"method {method} cannot train on {kind} records")
    theta = clone_trainable(base)
    if config.steps == 0:
        return theta

    ref = clone_as_reference(base)
    ref_digest = params_digest(ref)
    sched = schedule or default_schedule(config.preference.T)
    cfg = config.preference
    batch: CpoBatch | DpoBatch
    if method == "cpo":
        batch = as_cpo_batch(dataset)  # type: ignore[arg-type]
    else:
        batch = as_dpo_batch(dataset)  # type: ignore[arg-type]
    size = len(batch)
    dim = (batch.x0 if isinstance(batch, CpoBatch) else batch.x0_w).shape[1]
    out = Path(checkpoint_dir) if checkpoint_dir is not None else None

    def draw(rng: np.random.Generator) -> tuple[CpoBatch | DpoBatch, np.ndarray, np.ndarray]:
        rows = rng.integers(0, size, size=config.batch_size)
        t = _timesteps(config, rng, sched, config.batch_size)
        return batch.take(rows), t, rng.standard_normal((config.batch_size, dim))

    def loss_at(step: int, rng: np.random.Generator) -> Tensor:
        mb, t, eps = draw(rng)
        if isinstance(mb, CpoBatch):
            t_prime = sample_timesteps(rng, sched, config.batch_size)
            eps_prime = rng.standard_normal((config.batch_size, dim))
            return total_loss(theta, ref, mb, t, eps, t_prime, eps_prime, cfg, sched)
        return dpo_loss(theta, ref, mb, t, eps, cfg, sched)

    def diagnostics(step: int, rng: np.random.Generator) -> dict[str, float]:
        mb, t, eps = draw(rng)
        with no_grad():
            if isinstance(mb, CpoBatch):
                inner = cpo_terms(theta, ref, mb, t, eps, sched, cfg).gap
            else:
                inner = dpo_inner(theta, ref, mb, t, eps, sched, cfg).data
        return {"implicit_accuracy": implicit_accuracy(inner)}

    marks = snapshot_steps(config.steps, config.snapshots) if on_snapshot else set()

    def on_step(step: int) -> None:
        if on_snapshot is not None and step in marks:
            on_snapshot(step, clone_as_reference(theta))

    logger.info(
        "Fine-tuning (%s): %d records, %d steps, lr %g, alpha %g",
        method,
        size,
        config.steps,
        config.lr,
        cfg.alpha_scale,
    )
    _optimize(theta, config, method, loss_at, metrics, out, diagnostics, on_step, progress)

    if params_digest(ref) != ref_digest:
        raise PrefDiffError("reference weights changed during fine-tuning")
    return theta
