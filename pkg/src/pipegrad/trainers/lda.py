"""Latent Dirichlet Allocation fitted by collapsed Gibbs sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LdaModel:
    doc_topic: np.ndarray  # V x K, rows are topic distributions
    vocabulary: dict[str, int]

    def __post_init__(self):
        self.doc_topic = np.atleast_2d(np.asarray(self.doc_topic, dtype=np.float64))
        if self.doc_topic.shape[0] != len(self.vocabulary):
            raise ValueError(f"doc_topic has {self.doc_topic.shape[0]} rows for {len(self.vocabulary)} categories")

    @property
    def n_topics(self) -> int:
        return self.doc_topic.shape[1]

    def index(self, values) -> np.ndarray:
        return np.array([self.vocabulary.get(str(v), -1) for v in values], dtype=np.int64)

    def transform(self, values) -> np.ndarray:
        """Topic vector per category; unseen categories get the uniform row."""
        idx = self.index(values)
        out = np.full((len(idx), self.n_topics), 1.0 / self.n_topics)
        seen = idx >= 0
        out[seen] = self.doc_topic[idx[seen]]
        return out


def fit_lda_gibbs(docs, K: int, alpha: float = 0.1, beta: float = 0.01,
                  iterations: int = 200, seed: int = 0, names=None) -> LdaModel:
    """Document-topic model for ``docs`` (lists of hashable tokens).

    ``names`` labels the documents (default: their positions as strings) and
    becomes the model's category vocabulary. Rows are
    ``(n_dk + alpha) / (len(d) + K * alpha)`` averaged over the last 10% of
    sweeps. Empty documents get the uniform row.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if len(docs) == 0:
        raise ValueError("no documents")
    words: dict = {}
    doc_words = [np.array([words.setdefault(t, len(words)) for t in d], dtype=np.int64) for d in docs]
    V = max(len(words), 1)
    rng = np.random.default_rng(seed)

    n_dk = np.zeros((len(docs), K))
    n_kw = np.zeros((K, V))
    n_k = np.zeros(K)
    z = []
    for d, ws in enumerate(doc_words):
        zd = rng.integers(0, K, size=len(ws))
        z.append(zd)
        np.add.at(n_dk[d], zd, 1.0)
        np.add.at(n_kw, (zd, ws), 1.0)
        np.add.at(n_k, zd, 1.0)

    lengths = np.array([len(ws) for ws in doc_words], dtype=np.float64)
    keep_from = iterations - max(1, iterations // 10)
    acc = np.zeros((len(docs), K))
    kept = 0
    v_beta = V * beta
    for it in range(iterations):
        for d, ws in enumerate(doc_words):
            zd = z[d]
            u = rng.random(len(ws))
            row = n_dk[d]
            for j in range(len(ws)):
                w, k = ws[j], zd[j]
                row[k] -= 1.0
                n_kw[k, w] -= 1.0
                n_k[k] -= 1.0
                p = (row + alpha) * (n_kw[:, w] + beta) / (n_k + v_beta)
                c = np.cumsum(p)
                k = int(np.searchsorted(c, u[j] * c[-1], side="right"))
                k = min(k, K - 1)
                zd[j] = k
                row[k] += 1.0
                n_kw[k, w] += 1.0
                n_k[k] += 1.0
        if it >= keep_from:
            acc += (n_dk + alpha) / (lengths + K * alpha)[:, None]
            kept += 1
    theta = acc / kept
    theta[lengths == 0] = 1.0 / K
    theta /= theta.sum(axis=1, keepdims=True)
    if names is None:
        names = [str(i) for i in range(len(docs))]
    return LdaModel(theta, {str(n): i for i, n in enumerate(names)})


def build_lda_documents(keys, companions, max_tokens_per_doc: int | None = None,
                        seed: int = 0) -> tuple[list[str], list[list[str]]]:
    """Group companion-column values into one document per distinct key value.

    ``companions`` maps column name to a value array aligned with ``keys``.
    Tokens are ``"column=value"`` strings. Documents longer than
    ``max_tokens_per_doc`` are subsampled without replacement.
    """
    order: dict[str, int] = {}
    docs: list[list[str]] = []
    for i, key in enumerate(keys):
        key = str(key)
        if key not in order:
            order[key] = len(docs)
            docs.append([])
        doc = docs[order[key]]
        for name, values in companions.items():
            doc.append(f"{name}={values[i]}")
    if max_tokens_per_doc is not None:
        rng = np.random.default_rng(seed)
        for j, doc in enumerate(docs):
            if len(doc) > max_tokens_per_doc:
                pick = np.sort(rng.choice(len(doc), size=max_tokens_per_doc, replace=False))
                docs[j] = [doc[p] for p in pick]
    return list(order), docs


def fit_lda_encoder(keys, companions, K: int, alpha: float = 0.1, beta: float = 0.01,
                    iterations: int = 100, seed: int = 0,
                    max_tokens_per_doc: int | None = 200) -> LdaModel:
    vocab_keys, docs = build_lda_documents(keys, companions, max_tokens_per_doc, seed)
    return fit_lda_gibbs(docs, K, alpha, beta, iterations, seed, names=vocab_keys)
