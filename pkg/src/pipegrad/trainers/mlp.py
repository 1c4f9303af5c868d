"""Plain two-hidden-layer MLP baseline trained with the same runtime as translated nets."""

from __future__ import annotations

import math

import numpy as np

from ..data import Dataset
from ..netrt.graph import NeuralGraph, NumericColumns, VocabIndex
from ..netrt.layers import Concat, Dense, Dropout, Embedding, ReLU
from ..netrt.train import TrainConfig, finetune
from .encoders import fit_onehot


def mlp_param_count(d: int, h1: int, h2: int) -> int:
    return d * h1 + h1 + h1 * h2 + h2 + h2 + 1


def size_hidden(d: int, target: int) -> int:
    """Equal hidden width whose parameter count is closest to ``target``."""
    # h^2 + (d + 3) h + 1 = target
    b = d + 3
    h = (-b + math.sqrt(b * b + 4 * max(target - 1, 0))) / 2
    lo = max(1, int(math.floor(h)))
    return min((lo, lo + 1), key=lambda k: abs(mlp_param_count(d, k, k) - target))


def build_mlp(ds: Dataset, hidden_sizes=(64, 64), dropout: float = 0.1, seed: int = 0) -> NeuralGraph:
    """Randomly initialized MLP over numeric columns and frozen one-hot categoricals."""
    h1, h2 = hidden_sizes
    if h1 < 1 or h2 < 1:
        raise ValueError("hidden sizes must be >= 1")
    rng = np.random.default_rng(seed)
    pres, layers, parts = [], [], []
    if ds.numeric_columns:
        pres.append(NumericColumns("numeric", ds.numeric_columns))
        parts.append("numeric")
    for col in ds.categorical_columns:
        vocab = fit_onehot(ds.column(col))
        pres.append(VocabIndex(f"idx:{col}", col, vocab.vocabulary))
        layers.append(Embedding.build(f"onehot:{col}", f"idx:{col}", np.eye(vocab.cardinality),
                                      np.zeros(vocab.cardinality), trainable=False))
        parts.append(layers[-1].id)
    if len(parts) > 1:
        layers.append(Concat("x", parts))
        x = "x"
    else:
        x = parts[0]
    d = sum(p.width for p in pres if isinstance(p, NumericColumns)) + sum(
        l.params["table"].value.shape[1] for l in layers if isinstance(l, Embedding))

    def dense(id, src, n_in, n_out):
        bound = 1.0 / math.sqrt(n_in)
        return Dense.build(id, src, rng.uniform(-bound, bound, (n_out, n_in)),
                           rng.uniform(-bound, bound, n_out))

    layers += [
        dense("hidden1", x, d, h1), ReLU("relu1", "hidden1"), Dropout("drop1", "relu1", dropout),
        dense("hidden2", "drop1", h1, h2), ReLU("relu2", "hidden2"), Dropout("drop2", "relu2", dropout),
        dense("out", "drop2", h2, 1),
    ]
    return NeuralGraph(pres, layers, "out", meta={"model": "mlp", "hidden_sizes": [h1, h2], "seed": seed})


def train_mlp_baseline(ds: Dataset, hidden_sizes=(64, 64), dropout: float = 0.1,
                       config: TrainConfig | None = None, seed: int = 0,
                       valid: Dataset | None = None):
    """Build and train the baseline; returns (network, history).

    Without a validation set, early stopping watches the training set.
    """
    net = build_mlp(ds, hidden_sizes, dropout, seed)
    cfg = config or TrainConfig(seed=seed)
    return finetune(net, ds, valid if valid is not None else ds, cfg)
