"""
optim - Adaptive-moment gradient descent with decoupled weight decay.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..diffcore import GradientMap, Tensor
from ..errors import ConfigError


class AdamW:
    """
    AdamW over diffcore parameter tensors.

    Parameters are updated in place. Weight decay shrinks each parameter by
    ``lr * weight_decay`` before the moment update and never enters the moments.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}", keys=["lr"])
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ConfigError(f"betas must lie in [0, 1), got {betas}", keys=["betas"])
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: GradientMap) -> None:
        """Apply one update; parameters missing from ``grads`` get a zero gradient."""
        self.steps += 1
        bias1 = 1.0 - self.beta1**self.steps
        bias2 = 1.0 - self.beta2**self.steps
        for p, m, v in zip(self.params, self._m, self._v, strict=True):
            g = grads[p].data if p in grads else np.zeros_like(p.data)
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
