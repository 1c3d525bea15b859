# src/services/optimizers.py
from typing import List

import numpy as np


class SGD:
    def __init__(self, params: List[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: List[np.ndarray]) -> None:
        for param, grad in zip(self.params, grads):
            param -= self.lr * grad


class Adam:
    """Dense Adam updating the parameter arrays in place."""

    def __init__(self, params: List[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def make_optimizer(name: str, params: List[np.ndarray], lr: float):
    if name == "adam":
        return Adam(params, lr)
    if name == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer '{name}'")
