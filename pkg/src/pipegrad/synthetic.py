"""Seeded synthetic tabular tasks with planted tree structure (no downloads needed)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import CATEGORICAL, NUMERIC, ColumnSchema, Dataset

FIXTURE_SCHEMA = [
    ColumnSchema("x1", NUMERIC),
    ColumnSchema("x2", NUMERIC),
    ColumnSchema("c1", CATEGORICAL),
    ColumnSchema("c2", CATEGORICAL),
]

C1_LEVELS = 8
C2_LEVELS = 12


def make_fixture(rows: int = 5000, seed: int = 0, missing_rate: float = 0.0) -> Dataset:
    """Two numeric and two categorical columns with a planted tree plus smooth terms.

    The label logit is a depth-2 tree over ``x1``, ``x2`` and a group of
    ``c1`` levels, plus a linear ``x2`` term, an ``x1 * x2`` interaction and a
    per-level ``c2`` offset; labels are Bernoulli draws.
    """
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(rows)
    x2 = rng.standard_normal(rows)
    c1 = rng.integers(0, C1_LEVELS, rows)
    c2 = rng.integers(0, C2_LEVELS, rows)
    # Effects are drawn from a fixed stream so every seed shares the same task.
    task = np.random.default_rng(12345)
    c2_effect = task.normal(0.0, 0.8, C2_LEVELS)
    group_a = c1 < C1_LEVELS // 2

    tree = np.where(x1 > 0.3,
                    np.where(x2 > -0.4, 1.8, -0.6),
                    np.where(group_a, 0.7, -1.4))
    logit = tree + 0.8 * x2 + 0.6 * x1 * x2 + c2_effect[c2]
    labels = (rng.random(rows) < expit(logit)).astype(np.int64)

    if missing_rate > 0:
        x1 = np.where(rng.random(rows) < missing_rate, 0.0, x1)
    return Dataset(
        schema=list(FIXTURE_SCHEMA),
        numeric_values={"x1": x1, "x2": x2},
        categorical_values={
            "c1": np.array([f"a{i}" for i in c1], dtype=object),
            "c2": np.array([f"b{i}" for i in c2], dtype=object),
        },
        labels=labels,
    )


@dataclass(frozen=True)
class PlantedSplit:
    feature: int
    threshold: float


# Depth-3 tree over three standardized features: (feature, threshold) per
# internal node in heap order, then the class of each of the 8 leaves.
PLANTED_SPLITS = (
    PlantedSplit(0, 0.3),
    PlantedSplit(1, -0.5), PlantedSplit(2, 0.4),
    PlantedSplit(2, -0.2), PlantedSplit(1, 0.6), PlantedSplit(1, 0.1), PlantedSplit(0, 1.0),
)
PLANTED_LEAVES = (0, 1, 0, 1, 0, 1, 1, 0)


def planted_labels(X: np.ndarray) -> np.ndarray:
    node = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(3):
        f = np.array([PLANTED_SPLITS[n].feature for n in node])
        t = np.array([PLANTED_SPLITS[n].threshold for n in node])
        node = 2 * node + 1 + (X[np.arange(X.shape[0]), f] > t)
    return np.array(PLANTED_LEAVES)[node - 7]


def make_threshold_task(rows: int = 20000, seed: int = 0, noise: float = 0.0) -> Dataset:
    """Three standardized numeric features labelled by the planted depth-3 tree.

    ``noise`` is the probability of flipping each label.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((rows, 3))
    y = planted_labels(X)
    if noise > 0:
        flip = rng.random(rows) < noise
        y = np.where(flip, 1 - y, y)
    schema = [ColumnSchema(f"f{i}", NUMERIC) for i in range(3)]
    return Dataset(schema, {f"f{i}": X[:, i] for i in range(3)}, {}, y)
