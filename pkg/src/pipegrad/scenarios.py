"""Greedy fitting of the canned pipelines: each operator is trained once, in order."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pipeline_ir as ir
from .data import Dataset
from .trainers.encoders import fit_onehot, hash_onehot
from .trainers.lda import fit_lda_encoder
from .trainers.linear import train_linear_sdca
from .trainers.pca import fit_pca
from .trainers.trees import leaf_onehot, train_gbdt

SCENARIOS = ("s1_onehot", "s1_hash", "s1_lda", "s2", "custom")


@dataclass
class PipelineConfig:
    num_trees: int = 20
    max_leaves: int = 8
    learning_rate: float = 0.1
    seed: int = 0
    hash_bits: int | None = None        # required for s1_hash
    count_threshold: int = 1            # drop encoded dimensions with fewer nonzeros
    lda_column: str | None = None       # defaults to the first categorical column
    lda_topics: int = 4
    lda_iterations: int = 50
    lda_max_tokens: int = 200
    pca_k: int = 4
    pca_count_threshold: int = 1
    sdca_regularization: float = 1e-3
    sdca_epochs: int = 20
    extra: dict = field(default_factory=dict)


def _encode_onehots(ds: Dataset, columns):
    encoders, blocks = [], []
    for col in columns:
        vocab = fit_onehot(ds.column(col))
        encoders.append((col, ir.ONEHOT, vocab))
        blocks.append(vocab.transform(ds.column(col)))
    return encoders, blocks


def _encode_hashed(ds: Dataset, columns, bits: int, threshold: int):
    encoders, blocks = [], []
    for col in columns:
        H = hash_onehot(ds.column(col), bits)
        keep = ir.count_select(H, threshold)
        encoders.append((col, ir.HASH_ENCODE, ir.HashEncoder(bits), keep))
        blocks.append(H[:, keep])
    return encoders, blocks


def _encode_lda(ds: Dataset, cfg: PipelineConfig):
    cats = ds.categorical_columns
    key = cfg.lda_column or cats[0]
    if key not in cats:
        raise ValueError(f"lda_column {key!r} is not a categorical column")
    others = [c for c in cats if c != key]
    model = fit_lda_encoder(ds.column(key), {c: ds.column(c) for c in others}, cfg.lda_topics,
                            iterations=cfg.lda_iterations, seed=cfg.seed,
                            max_tokens_per_doc=cfg.lda_max_tokens)
    encoders = [(key, ir.LDA, model)]
    blocks = [model.transform(ds.column(key))]
    more_enc, more_blocks = _encode_onehots(ds, others)
    return encoders + more_enc, blocks + more_blocks


def fit_pipeline(scenario: str, train: Dataset, cfg: PipelineConfig | None = None) -> ir.PipelineGraph:
    """Fit every operator of ``scenario`` on ``train`` and return the wired graph."""
    cfg = cfg or PipelineConfig()
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    if scenario == "custom":
        raise ValueError("scenario 'custom' has no canned fitter; supply a pipeline file instead")
    numeric = train.numeric_columns
    cats = train.categorical_columns
    if scenario == "s1_hash":
        if cfg.hash_bits is None:
            raise ValueError("scenario s1_hash requires hash_bits")
        encoders, blocks = _encode_hashed(train, cats, cfg.hash_bits, cfg.count_threshold)
    elif scenario == "s1_lda":
        if not cats:
            raise ValueError("scenario s1_lda needs a categorical column")
        encoders, blocks = _encode_lda(train, cfg)
    else:
        encoders, blocks = _encode_onehots(train, cats)

    X = np.concatenate([train.numeric_matrix(numeric)] + blocks, axis=1) if numeric else \
        np.concatenate(blocks, axis=1)
    y = train.labels

    if scenario != "s2":
        gbdt = train_gbdt(X, y, cfg.num_trees, cfg.max_leaves, cfg.learning_rate, seed=cfg.seed)
        return ir.build_scenario1(numeric, encoders, gbdt)

    select = ir.count_select(X, cfg.pca_count_threshold)
    pca_select = None if len(select) == X.shape[1] else select
    pca = fit_pca(X[:, select], cfg.pca_k, seed=cfg.seed)
    Z = pca.transform(X[:, select])
    gbdt = train_gbdt(Z, y, cfg.num_trees, cfg.max_leaves, cfg.learning_rate, seed=cfg.seed)
    joint = np.concatenate([leaf_onehot(gbdt, Z), X], axis=1)
    linear = train_linear_sdca(joint, y, cfg.sdca_regularization, cfg.sdca_epochs, seed=cfg.seed)
    return ir.build_scenario2(numeric, encoders, pca, gbdt, linear, pca_select)
