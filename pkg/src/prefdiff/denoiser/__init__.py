"""Conditional noise predictor, guidance and checkpoints."""

from .checkpoint import FORMAT_VERSION, MAGIC, CheckpointHeader, load_checkpoint, save_checkpoint
from .conditions import Condition, ConditionBatch, ConditionKind
from .network import (
    ArchConfig,
    DenoiserParams,
    clone_as_reference,
    clone_trainable,
    eps_fn_for,
    guided_eps,
    init_params,
    params_digest,
    predict_eps,
    timestep_features,
)

__all__ = [
    # Types
    "ArchConfig",
    "DenoiserParams",
    "Condition",
    "ConditionBatch",
    "ConditionKind",
    "CheckpointHeader",
    # Network
    "init_params",
    "predict_eps",
    "guided_eps",
    "timestep_features",
    "clone_as_reference",
    "clone_trainable",
    "params_digest",
    "eps_fn_for",
    # Persistence
    "save_checkpoint",
    "load_checkpoint",
    "MAGIC",
    "FORMAT_VERSION",
]
