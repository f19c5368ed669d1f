"""Adam optimizer with bias correction."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import Parameter


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                lr: float, beta1: float, beta2: float, eps: float, step: int) -> None:
    """One in-place Adam step on a single parameter (step counts from 1)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)


class Adam:
    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Parameter] = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = OrderedDict((p.name, np.zeros_like(p.data)) for p in self.params)
        self._v = OrderedDict((p.name, np.zeros_like(p.data)) for p in self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        for p in self.params:
            if p.grad is None:
                continue
            adam_update(p.data, p.grad, self._m[p.name], self._v[p.name],
                        self.lr, self.beta1, self.beta2, self.eps, self.step_count)

    def state_tensors(self) -> dict:
        """Optimizer state as named float32 arrays (for checkpoints)."""
        out = {"adam/step": np.asarray([self.step_count], dtype=np.float32)}
        for name in self._m:
            out[f"adam/m/{name}"] = self._m[name]
            out[f"adam/v/{name}"] = self._v[name]
        return out

    def load_state_tensors(self, tensors: dict) -> None:
        self.step_count = int(tensors["adam/step"][0])
        for name in self._m:
            self._m[name] = tensors[f"adam/m/{name}"].astype(self._m[name].dtype).reshape(self._m[name].shape).copy()
            self._v[name] = tensors[f"adam/v/{name}"].astype(self._v[name].dtype).reshape(self._v[name].shape).copy()
