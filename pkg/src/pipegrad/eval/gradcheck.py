"""Finite-difference audit of the runtime's analytic gradients."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..netrt.graph import NeuralGraph
from ..netrt.layers import HARD, TRAIN
from ..netrt.loss import loss_logistic


def gradient_check(net: NeuralGraph, batch: dict, labels, h: float = 1e-5, sample: int = 200,
                   seed: int = 0, mode: str = "eval", details: bool = False):
    """Max relative error between backprop and central differences.

    ``sample`` trainable coordinates are drawn without replacement. Relative
    error is ``|a - n| / max(|a|, |n|, 1e-12)``. Train mode replays the
    same dropout masks for every evaluation.

    The numeric side differences the logits row by row and turns each logit
    change into a loss change without cancellation; subtracting two rounded
    batch-mean losses would bury gradients below ~1e-11.
    """
    if mode == HARD:
        raise ValueError("non-differentiable mode: gradients are undefined in hard mode")
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        raise ValueError("gradient check needs a nonempty batch")

    def logits_at():
        rng = np.random.default_rng(seed) if mode == TRAIN else None
        return net.forward(batch, mode, rng)

    def loss_change(z_up, z_down):
        # softplus(z_up) - softplus(z_down) - y * dz, in a cancellation-free form
        dz = z_up - z_down
        return float(np.sum(np.log1p(expit(z_down) * np.expm1(dz)) - labels * dz)) / labels.shape[0]

    _, dlogits = loss_logistic(logits_at(), labels)
    net.backward(dlogits)
    params = net.parameters(trainable_only=True)
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    if total == 0:
        return (0.0, []) if details else 0.0
    picks = np.random.default_rng(seed).choice(total, size=min(sample, total), replace=False)
    offsets = np.cumsum(sizes)
    rows = []
    worst = 0.0
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right"))
        p = params[k]
        j = int(flat - (offsets[k] - sizes[k]))
        analytic = float(p.grad.flat[j])
        orig = p.value.flat[j]
        p.value.flat[j] = orig + h
        up = logits_at()
        p.value.flat[j] = orig - h
        down = logits_at()
        p.value.flat[j] = orig
        numeric = loss_change(up, down) / (2.0 * h)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, rel)
        rows.append((p.id, j, analytic, numeric, rel))
    return (worst, rows) if details else worst
