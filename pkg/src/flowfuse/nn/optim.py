"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update; returns new parameter arrays and state.

    update = lr * m_hat / (sqrt(v_hat) + eps) with the standard bias
    corrections m_hat = m / (1 - beta1^t), v_hat = v / (1 - beta2^t).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads and state must align")
    b1, b2 = betas
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"adam_step: shape mismatch {p.shape} vs {g.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(m=new_m, v=new_v, step=t)


class Adam:
    """Stateful wrapper applying adam_step to parameter Tensors in place."""

    def __init__(self, params: list[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def step(self) -> None:
        grads = []
        for p in self.params:
            grads.append(np.zeros_like(p.data) if p.grad is None else p.grad)
        new_p, self.state = adam_step(
            [p.data for p in self.params], grads, self.state, self.lr, self.betas, self.eps
        )
        for p, d in zip(self.params, new_p):
            p.data = d

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
