"""
gradcheck - Compare autodiff gradients against central finite differences.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence

import numpy as np

from ..errors import NonFiniteError
from .tensor import Tensor, _StopGradientTape, _stop_gradient_tape, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DENOMINATOR_FLOOR = 1e-12

type ScalarFn = Callable[[Sequence[Tensor]], Tensor]


def _evaluate(fn: ScalarFn, params: Sequence[Tensor], tape: _StopGradientTape) -> float:
    with no_grad(), _stop_gradient_tape(tape, replay=True):
        return float(fn(params).item())


def finite_diff_check(
    fn: ScalarFn,
    params: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    floor: float = DENOMINATOR_FLOOR,
) -> float:
    """
    Maximum relative error between autodiff and central-difference gradients.

    The error for one scalar parameter is
    ``|autodiff - central| / (|central| + floor)``. Values detached with
    ``stop_gradient`` are held at their unperturbed values during the perturbed
    evaluations.

    Args:
        fn: Maps the parameter list to a scalar tensor
        params: Parameter tensors; perturbed in place and restored
        step: Central-difference half step, must be positive
        floor: Added to the denominator

    Returns:
        The maximum relative error over every scalar parameter.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    tape = _StopGradientTape()
    with _stop_gradient_tape(tape, replay=False):
        output = fn(params)
    grads = backward(output, params)

    worst = 0.0
    offset = 0
    for p in params:
        flat = p.data.reshape(-1)
        auto = grads[p].data.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + step
            f_plus = _evaluate(fn, params, tape)
            flat[k] = original - step
            f_minus = _evaluate(fn, params, tape)
            flat[k] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError("finite_diff_check evaluation", index=offset + k)
            central = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, abs(auto[k] - central) / (abs(central) + floor))
        offset += flat.size

    logger.debug("finite_diff_check over %d scalars: max rel err %.3e", offset, worst)
    return worst
