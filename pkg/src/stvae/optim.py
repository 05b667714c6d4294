"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = field(default=BETA1)
    beta2: float = field(default=BETA2)
    eps: float = field(default=EPS)

    @classmethod
    def zeros_like(cls, params) -> AdamState:
        arrays = [np.asarray(getattr(p, "value", p)) for p in params]
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """One in-place Adam update of ``params`` (arrays or nodes)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        arr = getattr(p, "value", p)
        if arr.shape != g.shape or arr.shape != m.shape:
            raise ValueError(f"shape mismatch: param {arr.shape}, grad {g.shape}, state {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
