"""Lowering of trained pipeline operators into a differentiable network.

Trees become two-hidden-layer blocks (decision units, conjunction units,
leaf-value readout), categorical encoders become embedding lookups, and
affine operators become dense layers. Parametrization levels decide which
tree-block parameters are trainable:

    L1  leaf values
    L2  + decision biases (thresholds)
    L3  + decision weights (feature selectors)
    L4  + conjunction weights and biases, including structural zeros
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import pipeline_ir as ir
from .netrt.graph import HashIndex, NeuralGraph, NumericColumns, VocabIndex
from .netrt.layers import (EVAL, HARD, Concat, Context, Dense, Dropout, Embedding, Scale, Select,
                           Sigmoid, TreeLeaves, TreeSum)
from .trainers.encoders import OneHotVocab, hash_slots
from .trainers.lda import LdaModel
from .trainers.linear import LinearModel
from .trainers.pca import PcaModel
from .trainers.trees import Tree, TreeEnsemble

LEVELS = ("L1", "L2", "L3", "L4")
LEVEL_TRAINABLE = {
    "L1": frozenset({"w3"}),
    "L2": frozenset({"w3", "b1"}),
    "L3": frozenset({"w3", "b1", "W1"}),
    "L4": frozenset({"w3", "b1", "W1", "W2", "b2"}),
}


class TranslationError(ValueError):
    pass


@dataclass
class TranslationConfig:
    level: str = "L2"
    sharpness_gamma1: float = 100.0
    sharpness_gamma2: float = 10.0
    start: str = "warm"
    cold_seed: int = 0
    dropout_p: float = 0.0
    train_encoders: bool = False
    embedding_dim: int | None = None
    train_pca: bool = True

    def __post_init__(self):
        if self.level not in LEVELS:
            raise TranslationError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        if self.sharpness_gamma1 <= 0 or self.sharpness_gamma2 <= 0:
            raise TranslationError("sharpness gammas must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise TranslationError("dropout_p must be in [0, 1)")
        if self.start not in ("warm", "cold"):
            raise TranslationError(f"start must be 'warm' or 'cold', got {self.start!r}")

    @property
    def tree_trainable(self) -> frozenset:
        return LEVEL_TRAINABLE[self.level]


@dataclass
class TreeMlpBlock:
    W1: np.ndarray  # internal x d, rows e_{i(n)}
    b1: np.ndarray  # -theta_n
    W2: np.ndarray  # leaves x internal, entries in {+1, -1, 0}
    b2: np.ndarray  # n_neg(l) - C(l) + 0.5
    w3: np.ndarray  # leaf values
    trainable: dict

    @property
    def n_internal(self) -> int:
        return self.W1.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.w3.shape[0]

    def leaves(self, X, gamma1=100.0, gamma2=10.0, hard=False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.n_internal == 0:
            return np.ones((X.shape[0], 1))
        layer = TreeLeaves("block", "x", gamma1, gamma2, X.shape[1])
        layer.add_block(self.W1, self.b1, self.W2, self.b2)
        return layer.forward([X], Context(HARD if hard else EVAL))

    def output(self, X, gamma1=100.0, gamma2=10.0, hard=False) -> np.ndarray:
        return self.leaves(X, gamma1, gamma2, hard) @ self.w3


def translate_tree(tree: Tree, cfg: TranslationConfig, n_features: int) -> TreeMlpBlock:
    internal = tree.internal_ids
    pos = {nid: j for j, nid in enumerate(internal)}
    W1 = np.zeros((len(internal), n_features))
    b1 = np.zeros(len(internal))
    for j, nid in enumerate(internal):
        node = tree.nodes[nid]
        W1[j, node.feature] = 1.0
        b1[j] = -node.threshold
    paths = tree.leaf_paths()
    W2 = np.zeros((len(paths), len(internal)))
    b2 = np.zeros(len(paths))
    for li, path in enumerate(paths):
        n_neg = 0
        for nid, went_right in path:
            W2[li, pos[nid]] = 1.0 if went_right else -1.0
            n_neg += not went_right
        b2[li] = n_neg - len(path) + 0.5
    w3 = np.array([tree.nodes[n].value for n in tree.leaf_ids])
    trainable = {name: name in cfg.tree_trainable for name in ("W1", "b1", "W2", "b2", "w3")}
    return TreeMlpBlock(W1, b1, W2, b2, w3, trainable)


@dataclass
class EnsembleFragment:
    layers: list
    leaves: str  # tensor carrying (possibly dropped-out) leaf activations
    score: str | None  # tensor carrying the ensemble score, if emitted


def translate_ensemble(ens: TreeEnsemble, cfg: TranslationConfig, input: str = "x",
                       id: str = "gbdt", with_score: bool = True) -> EnsembleFragment:
    if not ens.trees:
        raise TranslationError("cannot translate an empty ensemble")
    leaves = TreeLeaves(f"{id}/leaves", input, cfg.sharpness_gamma1, cfg.sharpness_gamma2, ens.n_features)
    values = []
    for tree in ens.trees:
        block = translate_tree(tree, cfg, ens.n_features)
        leaves.add_block(block.W1, block.b1, block.W2, block.b2)
        values.append(block.w3)
    for name, p in leaves.params.items():
        p.trainable = name.rsplit(".", 1)[1] in cfg.tree_trainable
    layers = [leaves]
    leaf_tensor = leaves.id
    if cfg.dropout_p > 0:
        layers.append(Dropout(f"{id}/dropout", leaves.id, cfg.dropout_p))
        leaf_tensor = layers[-1].id
    score = None
    if with_score:
        layers.append(TreeSum.build(id, leaf_tensor, values, ens.base_score, "w3" in cfg.tree_trainable))
        score = id
    return EnsembleFragment(layers, leaf_tensor, score)


@dataclass
class EmbeddingTable:
    table: np.ndarray
    fallback: np.ndarray
    trainable: bool
    vocabulary: dict | None = None
    bits: int | None = None

    @property
    def shape(self):
        return self.table.shape

    @property
    def n_params(self) -> int:
        return int(self.table.size)

    def keys(self, values) -> np.ndarray:
        if self.bits is not None:
            return hash_slots(values, self.bits)
        return np.array([self.vocabulary.get(str(v), -1) for v in values], dtype=np.int64)

    def lookup(self, values) -> np.ndarray:
        idx = self.keys(values)
        out = np.empty((len(idx), self.table.shape[1]))
        seen = idx >= 0
        out[seen] = self.table[idx[seen]]
        out[~seen] = self.fallback
        return out

    def to_layer(self, id, input) -> Embedding:
        return Embedding.build(id, input, self.table, self.fallback, self.trainable)


def translate_onehot(vocab: OneHotVocab, cfg: TranslationConfig) -> EmbeddingTable:
    if vocab.cardinality < 1:
        raise TranslationError("one-hot vocabulary is empty")
    return EmbeddingTable(np.eye(vocab.cardinality), np.zeros(vocab.cardinality),
                          cfg.train_encoders, dict(vocab.vocabulary))


def translate_hash(bits: int, cfg: TranslationConfig, seed: int = 0) -> EmbeddingTable:
    """Hash-slot lookup table; identity when the embedding keeps every slot.

    A narrower table gets orthonormal columns rescaled so rows have unit
    norm on average (entries of order ``1/sqrt(dim)``).
    """
    if not 1 <= bits <= 30:
        raise TranslationError(f"bits must be in [1, 30], got {bits}")
    V = 1 << bits
    dim = cfg.embedding_dim or V
    if dim == V:
        table = np.eye(V)
    else:
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((V, dim)))
        table = q * np.sqrt(V / dim)
    return EmbeddingTable(table, np.zeros(dim), cfg.train_encoders, bits=bits)


def translate_lda(model: LdaModel, cfg: TranslationConfig) -> EmbeddingTable:
    K = model.n_topics
    return EmbeddingTable(model.doc_topic.copy(), np.full(K, 1.0 / K), cfg.train_encoders,
                          dict(model.vocabulary))


def translate_linear(m: LinearModel, id="linear", input="x", trainable=True) -> Dense:
    return Dense.build(id, input, m.weights[None, :], [m.bias], trainable)


def translate_pca(m: PcaModel, id="pca", input="x", trainable=True) -> Dense:
    return Dense.build(id, input, m.components, -(m.components @ m.mean), trainable)


def translate_standardizer(s: ir.Standardizer, id="standardize", input="x", trainable=True) -> Scale:
    return Scale.build(id, input, 1.0 / s.scale, -s.mean / s.scale, trainable)


def translate_pipeline(graph: ir.PipelineGraph, cfg: TranslationConfig | None = None) -> NeuralGraph:
    """Lower every node of a validated pipeline and wire the layers by its edges."""
    cfg = cfg or TranslationConfig()
    ir.validate(graph)
    consumers: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    for n in graph.nodes:
        for s in n.inputs:
            consumers[s].append(n.kind)

    pres, layers = [], []
    tensor: dict[str, str] = {}
    leaf_tensor: dict[str, str] = {}
    output_sigmoid = False

    for nid in graph.order:
        n = graph.node(nid)
        p = n.payload
        ins = [tensor.get(s) for s in n.inputs]  # a leaves-only ensemble has no score tensor
        src = graph.sources.get(nid)
        if not n.inputs and isinstance(src, list) and n.kind != ir.COLUMN_SELECT:
            pres.append(NumericColumns(f"cols:{nid}", src))
            ins = [pres[-1].name]

        if n.kind == ir.COLUMN_SELECT:
            if p.columns is not None:
                pres.append(NumericColumns(f"cols:{nid}", p.columns))
                tensor[nid] = pres[-1].name
                continue
            layers.append(Select(nid, ins, p.indices, graph.dims[n.inputs[0]]))
        elif n.kind in (ir.ONEHOT, ir.HASH_ENCODE, ir.LDA):
            column = graph.sources[nid]
            if n.kind == ir.ONEHOT:
                table = translate_onehot(p, cfg)
                pres.append(VocabIndex(f"idx:{nid}", column, p.vocabulary))
            elif n.kind == ir.LDA:
                table = translate_lda(p, cfg)
                pres.append(VocabIndex(f"idx:{nid}", column, p.vocabulary))
            else:
                table = translate_hash(p.bits, cfg)
                pres.append(HashIndex(f"idx:{nid}", column, p.bits))
            if table.shape[1] != graph.dims[nid]:
                raise TranslationError(
                    f"node {nid!r}: embedding width {table.shape[1]} differs from the encoder width "
                    f"{graph.dims[nid]} its consumers were trained on"
                )
            layers.append(table.to_layer(nid, pres[-1].name))
        elif n.kind == ir.STANDARDIZE:
            layers.append(translate_standardizer(p, nid, ins[0]))
        elif n.kind == ir.PCA:
            layers.append(translate_pca(p, nid, ins[0], cfg.train_pca))
        elif n.kind == ir.LINEAR:
            layers.append(translate_linear(p, nid, ins[0]))
        elif n.kind == ir.TREE_ENSEMBLE:
            needs_score = nid == graph.sink or any(k != ir.LEAF_ONEHOT for k in consumers[nid])
            frag = translate_ensemble(p, cfg, ins[0], nid, with_score=needs_score)
            layers.extend(frag.layers)
            leaf_tensor[nid] = frag.leaves
            if frag.score is not None:
                tensor[nid] = frag.score
            continue
        elif n.kind == ir.LEAF_ONEHOT:
            tensor[nid] = leaf_tensor[n.inputs[0]]
            continue
        elif n.kind == ir.CONCAT:
            layers.append(Concat(nid, ins))
        elif n.kind == ir.SIGMOID:
            if nid == graph.sink:
                output_sigmoid = True
                tensor[nid] = ins[0]
                continue
            layers.append(Sigmoid(nid, ins))
        else:
            raise TranslationError(f"no lowering for node kind {n.kind!r}")
        tensor[nid] = nid

    meta = {"translation": asdict(cfg), "pipeline_sink": graph.sink}
    net = NeuralGraph(pres, layers, tensor[graph.sink], output_sigmoid, meta)
    if cfg.start == "cold":
        init_cold(net, cfg.cold_seed)
    return net


def init_cold(net: NeuralGraph, seed: int = 0) -> NeuralGraph:
    """Resample every trainable parameter from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), in place."""
    rng = np.random.default_rng(seed)
    for p in net.parameters():
        if not p.trainable:
            continue
        bound = 1.0 / np.sqrt(max(p.fan_in, 1))
        p.value = rng.uniform(-bound, bound, size=p.value.shape)
        p.grad = np.zeros_like(p.value)
    net.meta["cold_seed"] = int(seed)
    return net
