"""
network - The conditional noise predictor eps_theta(x_t, c, t).

A fixed-width MLP over [x_t, sinusoidal(t), embed(c)] with silu activations. The
discrete condition table reserves its last row as the null condition used for
classifier-free guidance; continuous conditions go through a linear embedding and
a learned null vector.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import Field

from ..config import Settings
from ..diffcore import (
    Tensor,
    add,
    as_tensor,
    concatenate,
    matmul,
    multiply,
    no_grad,
    silu,
    subtract,
    take_rows,
)
from ..errors import ConfigError, InvalidConditionError
from ..schedule import EpsFn
from .conditions import Condition, ConditionBatch

TIME_BASE = 10_000.0


class ArchConfig(Settings):
    """Architecture of the denoiser MLP."""

    data_dim: int = Field(default=2, ge=1, description="Dimension of x.")
    condition_kind: Literal["discrete", "continuous"] = Field(default="discrete")
    num_classes: int = Field(default=8, ge=1, description="K for discrete conditions.")
    cond_dim: int = Field(default=2, ge=1, description="Vector size of continuous conditions.")
    hidden: int = Field(default=128, ge=1, description="Hidden width.")
    depth: int = Field(default=3, ge=1, description="Number of hidden layers.")
    time_dim: int = Field(default=16, ge=2, description="Sinusoidal timestep features (even).")
    embed_dim: int = Field(default=16, ge=1, description="Condition embedding width.")
    seed: int = Field(default=0, description="Initialization seed.")


@dataclass
class DenoiserParams:
    """Weights of eps_theta plus architecture metadata."""

    arch: ArchConfig
    tensors: dict[str, Tensor]
    frozen: bool = False

    @property
    def null_index(self) -> int:
        """Row of the condition table reserved for the null condition."""
        return self.arch.num_classes

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def num_scalars(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def layer_count(self) -> int:
        return self.arch.depth + 1


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch: ArchConfig, seed: int | None = None) -> DenoiserParams:
    """
    Deterministically initialize a denoiser.

    Weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Args:
        arch: Architecture configuration
        seed: Overrides ``arch.seed`` when given

    Returns:
        Trainable DenoiserParams.
    """
    if arch.hidden < 1 or arch.depth < 1 or arch.data_dim < 1:
        raise ConfigError("denoiser width, depth and data_dim must be positive")
    if arch.time_dim % 2:
        raise ConfigError("time_dim must be even", keys=["time_dim"])
    if seed is not None:
        arch = arch.replace(seed=seed)
    rng = np.random.default_rng(arch.seed)

    tensors: dict[str, Tensor] = {}
    e = arch.embed_dim
    if arch.condition_kind == "discrete":
        tensors["cond_table"] = Tensor(
            _uniform(rng, (arch.num_classes + 1, e), 1), requires_grad=True, name="cond_table"
        )
    else:
        tensors["cond_weight"] = Tensor(
            _uniform(rng, (arch.cond_dim, e), arch.cond_dim), requires_grad=True, name="cond_weight"
        )
        tensors["cond_bias"] = Tensor(
            _uniform(rng, (e,), arch.cond_dim), requires_grad=True, name="cond_bias"
        )
        tensors["cond_null"] = Tensor(_uniform(rng, (e,), 1), requires_grad=True, name="cond_null")

    widths = [arch.data_dim + arch.time_dim + e] + [arch.hidden] * arch.depth + [arch.data_dim]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:], strict=True)):
        tensors[f"layer{i}.weight"] = Tensor(
            _uniform(rng, (fan_in, fan_out), fan_in), requires_grad=True, name=f"layer{i}.weight"
        )
        tensors[f"layer{i}.bias"] = Tensor(
            _uniform(rng, (fan_out,), fan_in), requires_grad=True, name=f"layer{i}.bias"
        )
    return DenoiserParams(arch=arch, tensors=tensors)


def timestep_features(t: int | np.ndarray, rows: int, dim: int) -> np.ndarray:
    """Sinusoidal features of the (raw, 1-based) timestep: (rows, dim)."""
    steps = np.broadcast_to(np.asarray(t, dtype=np.float64), (rows,))
    half = dim // 2
    freqs = np.exp(-math.log(TIME_BASE) * np.arange(half) / half)
    angles = steps[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def _null_mask(use_null: bool | np.ndarray, rows: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(use_null, dtype=bool), (rows,))


def _embed(params: DenoiserParams, c: ConditionBatch, null: np.ndarray) -> Tensor:
    arch = params.arch
    if c.kind != arch.condition_kind:
        raise InvalidConditionError(
            f"{c.kind} condition given to a {arch.condition_kind} denoiser"
        )
    if c.kind == "discrete":
        idx = np.asarray(c.values, dtype=np.int64)
        bad = (idx < 0) | (idx >= arch.num_classes)
        if np.any(bad & ~null):
            raise InvalidConditionError(
                f"condition index out of range 0..{arch.num_classes - 1}: {idx[bad & ~null][0]}"
            )
        return take_rows(params.tensors["cond_table"], np.where(null, params.null_index, idx))

    values = np.asarray(c.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != arch.cond_dim:
        raise InvalidConditionError(f"continuous conditions must be (B, {arch.cond_dim})")
    if not np.all(np.isfinite(values[~null])):
        raise InvalidConditionError("continuous condition must be finite")
    values = np.where(null[:, None], 0.0, values)
    base = add(matmul(values, params.tensors["cond_weight"]), params.tensors["cond_bias"])
    keep = (~null).astype(np.float64)[:, None]
    return add(multiply(base, keep), multiply(params.tensors["cond_null"], 1.0 - keep))


def predict_eps(
    params: DenoiserParams,
    x_t: np.ndarray | Tensor,
    t: int | np.ndarray,
    c: Condition | ConditionBatch | Sequence[Condition],
    use_null: bool | np.ndarray = False,
    embed_offset: np.ndarray | None = None,
) -> Tensor:
    """
    Predict the noise in ``x_t``.

    Args:
        params: Denoiser weights
        x_t: Noisy inputs, (B, D) or (D,)
        t: Timestep, scalar or one per row
        c: Conditions (single, sequence or batch)
        use_null: Replace the condition embedding by the null embedding, for all
            rows or per row
        embed_offset: Constant shift of the condition embedding, (B, embed_dim)

    Returns:
        The predicted noise, same shape as ``x_t``; differentiable in ``params``.
    """
    x = as_tensor(x_t)
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, x.shape[0])
    rows = x.shape[0]
    if x.shape[1] != params.arch.data_dim:
        raise InvalidConditionError(
            f"x_t has dimension {x.shape[1]}, denoiser expects {params.arch.data_dim}"
        )
    null = _null_mask(use_null, rows)
    batch = ConditionBatch.coerce(c, rows)

    emb = _embed(params, batch, null)
    if embed_offset is not None:
        emb = add(emb, np.asarray(embed_offset, dtype=np.float64))
    h = concatenate([x, timestep_features(t, rows, params.arch.time_dim), emb], axis=1)
    last = params.layer_count() - 1
    for i in range(params.layer_count()):
        h = add(matmul(h, params.tensors[f"layer{i}.weight"]), params.tensors[f"layer{i}.bias"])
        if i < last:
            h = silu(h)
    return h.reshape(params.arch.data_dim) if squeeze else h


def guided_eps(
    params: DenoiserParams,
    x_t: np.ndarray | Tensor,
    t: int | np.ndarray,
    c: Condition | ConditionBatch | Sequence[Condition],
    w: float,
) -> Tensor:
    """Classifier-free guidance: eps_null + w * (eps_c - eps_null)."""
    if w < 0:
        raise ConfigError(f"guidance scale must be non-negative, got {w}", keys=["guidance_w"])
    if w == 1.0:
        return predict_eps(params, x_t, t, c)
    eps_null = predict_eps(params, x_t, t, c, use_null=True)
    if w == 0.0:
        return eps_null
    eps_c = predict_eps(params, x_t, t, c)
    return add(eps_null, multiply(subtract(eps_c, eps_null), w))


def clone_as_reference(params: DenoiserParams) -> DenoiserParams:
    """Deep copy whose tensors never receive gradients."""
    tensors = {
        name: Tensor(t.data.copy(), requires_grad=False, name=name)
        for name, t in params.tensors.items()
    }
    return DenoiserParams(arch=params.arch, tensors=tensors, frozen=True)


def clone_trainable(params: DenoiserParams) -> DenoiserParams:
    """Deep copy whose tensors are trainable parameters."""
    tensors = {
        name: Tensor(t.data.copy(), requires_grad=True, name=name)
        for name, t in params.tensors.items()
    }
    return DenoiserParams(arch=params.arch, tensors=tensors)


def params_digest(params: DenoiserParams) -> str:
    """SHA-256 over tensor names and little-endian values."""
    h = hashlib.sha256()
    for name, t in params.tensors.items():
        h.update(name.encode("utf-8"))
        h.update(t.data.astype("<f8").tobytes())
    return h.hexdigest()


def eps_fn_for(params: DenoiserParams, c: ConditionBatch, w: float = 1.0) -> EpsFn:
    """Bind conditions and a guidance scale into an ``eps_fn(x_t, t)`` for sampling."""

    def eps_fn(x_t: np.ndarray, t: int) -> np.ndarray:
        with no_grad():
            return guided_eps(params, x_t, t, c, w).data

    return eps_fn
