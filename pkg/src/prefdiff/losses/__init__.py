"""Training objectives: pretraining, Diffusion-DPO and CPO, plus their checks."""

from .batches import CpoBatch, CpoExample, DpoBatch, DpoExample, as_cpo_batch, as_dpo_batch
from .checks import JensenReport, gradient_identity_check, jensen_bound_check
from .objectives import (
    ContrastTerms,
    contrast_terms,
    cpo_final_loss,
    cpo_logsigmoid_loss,
    cpo_terms,
    cpo_weight,
    dpo_inner,
    dpo_loss,
    implicit_accuracy,
    pretrain_loss,
    reference_error,
    squared_error,
    total_loss,
)
from .preference import DEFAULT_ALPHA, DEFAULT_MARGIN, DEFAULT_REG_LAMBDA, PreferenceConfig

__all__ = [
    # Config
    "PreferenceConfig",
    "DEFAULT_ALPHA",
    "DEFAULT_MARGIN",
    "DEFAULT_REG_LAMBDA",
    # Batches
    "CpoBatch",
    "DpoBatch",
    "CpoExample",
    "DpoExample",
    "as_cpo_batch",
    "as_dpo_batch",
    # Objectives
    "ContrastTerms",
    "squared_error",
    "reference_error",
    "pretrain_loss",
    "contrast_terms",
    "cpo_terms",
    "dpo_inner",
    "dpo_loss",
    "cpo_logsigmoid_loss",
    "cpo_weight",
    "cpo_final_loss",
    "total_loss",
    "implicit_accuracy",
    # Checks
    "gradient_identity_check",
    "jensen_bound_check",
    "JensenReport",
]
