"""Adam optimizer over Param objects."""

from __future__ import annotations

import numpy as np

from .layers import Param


class Adam:
    """Adam with bias correction; epsilon sits outside the square root.

    A step with zero gradients from a fresh state leaves the parameters
    unchanged, and a first step with unit gradient moves each weight by
    almost exactly the learning rate.
    """

    def __init__(self, params: list[Param], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for slot, param in enumerate(self.params):
            grad = param.grad
            if grad is None:
                grad = np.zeros_like(param.value)
            self.m[slot] = self.beta1 * self.m[slot] + (1.0 - self.beta1) * grad
            self.v[slot] = self.beta2 * self.v[slot] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[slot] / correction1
            v_hat = self.v[slot] / correction2
            param.value -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
