"""AdamW with per-group learning rates and linear warmup.

The update is computed as one product, ``lr_eff * (m_hat/(sqrt(v_hat)+eps)
+ wd*theta)``, so two tensors with identical parameters, gradients, and
moments but learning rates in an exact 2x ratio receive bit-exact 2x
updates (doubling is exact in binary floating point).
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class AdamW:
    def __init__(self, params: dict[str, np.ndarray],
                 lr_of: Callable[[str], float] | float,
                 beta1: float = 0.9, beta2: float = 0.95, eps: float = 1e-5,
                 weight_decay: float = 0.1, warmup_steps: int = 0,
                 record_updates: bool = False):
        self.params = params
        self.lr_of = lr_of if callable(lr_of) else (lambda name: lr_of)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.record_updates = record_updates
        self.last_updates: dict[str, np.ndarray] = {}

    def warmup_factor(self, t: int) -> float:
        if self.warmup_steps <= 0:
            return 1.0
        return min(1.0, t / self.warmup_steps)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        warm = self.warmup_factor(self.t)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, theta in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            lr_eff = self.lr_of(name) * warm
            update = lr_eff * (m_hat / (np.sqrt(v_hat) + self.eps)
                               + self.weight_decay * theta)
            theta -= update
            if self.record_updates:
                self.last_updates[name] = update
