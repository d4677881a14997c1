"""Training loops, the optimizer, metrics logging and evaluation."""

from .evaluate import (
    MIN_EVAL_SAMPLES,
    EvalConfig,
    EvalReport,
    TradeoffPoint,
    cfg_sweep,
    evaluate,
    median_bandwidth,
    mmd,
    relative_error_reduction,
    tradeoff_comparison,
)
from .metrics import MetricRecord, MetricsLog, read_metrics
from .optim import AdamW
from .train import (
    BASE_LR,
    FINETUNE_LR,
    HAS_TQDM,
    TrainConfig,
    finetune,
    snapshot_steps,
    train_base,
)

__all__ = [
    # Training
    "TrainConfig",
    "BASE_LR",
    "FINETUNE_LR",
    "HAS_TQDM",
    "AdamW",
    "train_base",
    "finetune",
    "snapshot_steps",
    # Metrics
    "MetricsLog",
    "MetricRecord",
    "read_metrics",
    # Evaluation
    "EvalConfig",
    "EvalReport",
    "MIN_EVAL_SAMPLES",
    "evaluate",
    "cfg_sweep",
    "mmd",
    "median_bandwidth",
    "relative_error_reduction",
    "TradeoffPoint",
    "tradeoff_comparison",
]
