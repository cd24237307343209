"""First-order optimizers over lists of parameter arrays, updated in place."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return [np.array([float(self.t)])] + [a.copy() for a in self.m] + [a.copy() for a in self.v]

    def load_arrays(self, arrays) -> None:
        n = len(self.params)
        self.t = int(arrays[0][0])
        for dst, src in zip(self.m + self.v, arrays[1 : 1 + 2 * n]):
            dst[...] = src


class SGD:
    def __init__(self, params: list[np.ndarray]):
        self.params = params

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        for p, g in zip(self.params, grads):
            p -= lr * g

    def state_arrays(self) -> list[np.ndarray]:
        return []

    def load_arrays(self, arrays) -> None:
        pass


def make_optimizer(name: str, params: list[np.ndarray]):
    if name == "adam":
        return Adam(params)
    if name == "sgd":
        return SGD(params)
    raise ValueError(f"unknown optimizer {name!r}; expected 'adam' or 'sgd'")
