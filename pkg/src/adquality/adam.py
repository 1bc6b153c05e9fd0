"""Adam optimizer operating in place on a list of numpy parameter arrays."""

from __future__ import annotations

import numpy as np

ALPHA = 1e-3
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def adam_update(p, g, m, v, t, alpha=ALPHA, beta1=BETA1, beta2=BETA2, eps=EPS):
    """One Adam step at iteration ``t`` (1-based). Returns (p, m, v)."""
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return p - alpha * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, params: list[np.ndarray], alpha: float = ALPHA, beta1: float = BETA1,
                 beta2: float = BETA2, eps: float = EPS):
        self.params = params
        self.alpha, self.beta1, self.beta2, self.eps = alpha, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            new, self.m[i], self.v[i] = adam_update(p, g, self.m[i], self.v[i], self.t,
                                                    self.alpha, self.beta1, self.beta2, self.eps)
            p[...] = new
