"""Adam with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState) -> None:
    """One bias-corrected Adam update of the trainable parameters, in place.

    Weight decay shrinks values by ``lr * weight_decay`` before the Adam
    update and is never folded into the gradient.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        if not p.trainable:
            continue
        m = state.m.get(p.id)
        if m is None:
            m = state.m[p.id] = np.zeros_like(p.value)
            state.v[p.id] = np.zeros_like(p.value)
        v = state.v[p.id]
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad * p.grad
        if state.weight_decay:
            p.value -= state.lr * state.weight_decay * p.value
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
