"""Dense float64 tensors with reverse-mode automatic differentiation."""

from .gradcheck import finite_diff_check
from .tensor import (
    ComputationRecord,
    GradientMap,
    Node,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concatenate,
    debug_mode,
    is_debug,
    log,
    log_sigmoid,
    matmul,
    mean,
    multiply,
    no_grad,
    relu,
    reshape,
    scale,
    sigmoid,
    silu,
    square,
    stop_gradient,
    subtract,
    take_rows,
    tensor_sum,
)

__all__ = [
    # Types
    "Tensor",
    "Node",
    "ComputationRecord",
    "GradientMap",
    # Primitives
    "as_tensor",
    "add",
    "subtract",
    "multiply",
    "scale",
    "matmul",
    "broadcast_to",
    "reshape",
    "concatenate",
    "take_rows",
    "tensor_sum",
    "mean",
    "square",
    "relu",
    "silu",
    "sigmoid",
    "log",
    "log_sigmoid",
    "stop_gradient",
    # Graph control
    "backward",
    "no_grad",
    "debug_mode",
    "is_debug",
    # Checks
    "finite_diff_check",
]
