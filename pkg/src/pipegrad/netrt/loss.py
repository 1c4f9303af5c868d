"""Binary cross-entropy on logits."""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def loss_logistic(logits, labels) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits.

    Uses ``log(1 + exp(-|z|)) + max(z, 0) - z*y``, which never overflows.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and labels {y.shape} differ in shape")
    n = z.shape[0]
    if n == 0:
        return 0.0, np.zeros(0)
    losses = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * y
    return float(losses.mean()), (expit(z) - y) / n
