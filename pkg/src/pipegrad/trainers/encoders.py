"""Categorical encoders: vocabulary one-hot and hashed one-hot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import hash_category


@dataclass
class OneHotVocab:
    vocabulary: dict[str, int]

    @property
    def cardinality(self) -> int:
        return len(self.vocabulary)

    def index(self, values) -> np.ndarray:
        """Vocabulary index per value, -1 for unseen values."""
        return np.array([self.vocabulary.get(str(v), -1) for v in values], dtype=np.int64)

    def encode(self, value) -> np.ndarray:
        out = np.zeros(self.cardinality)
        i = self.vocabulary.get(str(value))
        if i is not None:
            out[i] = 1.0
        return out

    def transform(self, values) -> np.ndarray:
        idx = self.index(values)
        out = np.zeros((len(idx), self.cardinality))
        seen = idx >= 0
        out[np.nonzero(seen)[0], idx[seen]] = 1.0
        return out


def fit_onehot(column) -> OneHotVocab:
    """Vocabulary of distinct values in order of first appearance."""
    vocab: dict[str, int] = {}
    for v in column:
        vocab.setdefault(str(v), len(vocab))
    return OneHotVocab(vocab)


def hash_slots(values, bits: int) -> np.ndarray:
    cache: dict[str, int] = {}
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        s = str(v)
        slot = cache.get(s)
        if slot is None:
            slot = cache[s] = hash_category(s, bits)
        out[i] = slot
    return out


def hash_onehot(values, bits: int) -> np.ndarray:
    slots = hash_slots(values, bits)
    out = np.zeros((len(slots), 1 << bits))
    out[np.arange(len(slots)), slots] = 1.0
    return out
