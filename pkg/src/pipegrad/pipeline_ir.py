"""Pipeline DAG of trained operators: validation, reference execution, JSON I/O.

The reference executor defines ground-truth semantics that the translated
network must reproduce in hard mode.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from .data import Dataset
from .trainers.encoders import OneHotVocab, hash_onehot
from .trainers.lda import LdaModel
from .trainers.linear import LinearModel
from .trainers.pca import PcaModel
from .trainers.trees import Tree, TreeEnsemble, TreeNode, leaf_onehot

PIPELINE_VERSION = "pipegrad.pipeline/1"

ONEHOT = "onehot"
HASH_ENCODE = "hash_encode"
LDA = "lda"
STANDARDIZE = "standardize"
PCA = "pca"
TREE_ENSEMBLE = "tree_ensemble"
LINEAR = "linear"
LEAF_ONEHOT = "leaf_onehot"
CONCAT = "concat"
SIGMOID = "sigmoid"
COLUMN_SELECT = "column_select"

KINDS = (ONEHOT, HASH_ENCODE, LDA, STANDARDIZE, PCA, TREE_ENSEMBLE, LINEAR,
         LEAF_ONEHOT, CONCAT, SIGMOID, COLUMN_SELECT)
CATEGORICAL_ENTRY = (ONEHOT, HASH_ENCODE, LDA)


class PipelineError(ValueError):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        if self.mean.shape != self.scale.shape:
            raise PipelineError("standardizer mean and scale differ in length")


@dataclass
class HashEncoder:
    bits: int

    @property
    def width(self) -> int:
        return 1 << self.bits


@dataclass
class ColumnSelection:
    """Either dataset numeric columns (entry node) or indices into the upstream vector."""

    columns: list[str] | None = None
    indices: list[int] | None = None

    def __post_init__(self):
        if (self.columns is None) == (self.indices is None):
            raise PipelineError("column_select needs exactly one of 'columns' or 'indices'")


PAYLOAD_TYPES = {
    ONEHOT: OneHotVocab, HASH_ENCODE: HashEncoder, LDA: LdaModel, STANDARDIZE: Standardizer,
    PCA: PcaModel, TREE_ENSEMBLE: TreeEnsemble, LINEAR: LinearModel, COLUMN_SELECT: ColumnSelection,
}


@dataclass
class OperatorNode:
    id: str
    kind: str
    payload: Any = None
    inputs: list[str] = field(default_factory=list)


@dataclass
class PipelineGraph:
    """Operators plus source bindings and one sink.

    ``sources`` maps an entry node id to a dataset column (categorical
    encoders) or to a list of numeric columns read as one vector.
    """

    nodes: list[OperatorNode]
    sources: dict[str, str]
    sink: str
    order: list[str] = field(default_factory=list, compare=False)
    dims: dict[str, int] = field(default_factory=dict, compare=False)

    def node(self, nid: str) -> OperatorNode:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    def nodes_of_kind(self, kind: str) -> list[OperatorNode]:
        return [n for n in self.nodes if n.kind == kind]


# -- validation ---------------------------------------------------------------

def _topo_order(graph: PipelineGraph) -> list[str]:
    ids = [n.id for n in graph.nodes]
    indeg = {i: 0 for i in ids}
    consumers = {i: [] for i in ids}
    for n in graph.nodes:
        for src in n.inputs:
            if src not in indeg:
                raise PipelineError(f"node {n.id!r} reads unknown node {src!r}")
            indeg[n.id] += 1
            consumers[src].append(n.id)
    queue = deque(i for i in ids if indeg[i] == 0)
    order = []
    while queue:
        nid = queue.popleft()
        order.append(nid)
        for c in consumers[nid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if len(order) != len(ids):
        raise PipelineError(f"cycle through {_find_cycle(graph, set(ids) - set(order))}")
    return order


def _find_cycle(graph: PipelineGraph, stuck: set[str]) -> str:
    inputs = {n.id: [s for s in n.inputs if s in stuck] for n in graph.nodes if n.id in stuck}
    start = sorted(stuck)[0]
    path, seen = [start], {start: 0}
    cur = start
    while True:
        cur = inputs[cur][0]
        if cur in seen:
            cyc = path[seen[cur]:] + [cur]
            return " -> ".join(cyc)
        seen[cur] = len(path)
        path.append(cur)


def _check_arity(n: OperatorNode, graph: PipelineGraph):
    k = len(n.inputs)
    if n.kind in CATEGORICAL_ENTRY:
        if k != 0 or n.id not in graph.sources:
            raise PipelineError(f"node {n.id!r} ({n.kind}) must be bound to one dataset column")
    elif n.kind == COLUMN_SELECT:
        if n.payload.columns is not None and k != 0:
            raise PipelineError(f"node {n.id!r}: column selection by name takes no node inputs")
        if n.payload.indices is not None and k != 1:
            raise PipelineError(f"node {n.id!r}: index selection takes exactly one input")
    elif n.kind == CONCAT:
        if k < 2:
            raise PipelineError(f"node {n.id!r}: concat needs at least 2 inputs, got {k}")
    elif k == 0 and isinstance(graph.sources.get(n.id), list) and n.kind != LEAF_ONEHOT:
        pass  # reads a vector of numeric dataset columns directly
    elif k != 1 or n.id in graph.sources:
        raise PipelineError(f"node {n.id!r} ({n.kind}) takes exactly one input, got {k}")


def _dim_error(consumer, producer, expected, actual):
    return PipelineError(
        f"dimension mismatch: node {consumer!r} expects {expected} inputs "
        f"but {producer!r} provides {actual}"
    )


def validate(graph: PipelineGraph) -> PipelineGraph:
    """Check kinds, payloads, arity, acyclicity, reachability and dimensions.

    Fills ``graph.order`` (topological) and ``graph.dims`` (output widths).
    """
    seen = set()
    for n in graph.nodes:
        if n.id in seen:
            raise PipelineError(f"duplicate node id {n.id!r}")
        seen.add(n.id)
        if n.kind not in KINDS:
            raise PipelineError(f"unknown node kind {n.kind!r} (node {n.id!r})")
        want = PAYLOAD_TYPES.get(n.kind)
        if want is not None and not isinstance(n.payload, want):
            raise PipelineError(f"node {n.id!r}: payload {type(n.payload).__name__} does not match kind {n.kind}")
    for nid in graph.sources:
        if nid not in seen:
            raise PipelineError(f"source binding for unknown node {nid!r}")
    for n in graph.nodes:
        _check_arity(n, graph)

    order = _topo_order(graph)
    if graph.sink not in seen:
        raise PipelineError(f"sink {graph.sink!r} is not a node")
    consumed = {s for n in graph.nodes for s in n.inputs}
    terminal = [n.id for n in graph.nodes if n.id not in consumed]
    if terminal != [graph.sink]:
        raise PipelineError(f"pipeline must have exactly one sink ({graph.sink!r}); terminal nodes: {terminal}")

    dims: dict[str, int] = {}
    for nid in order:
        n = graph.node(nid)
        ins = [dims[s] for s in n.inputs]
        if not n.inputs and isinstance(graph.sources.get(nid), list):
            ins = [len(graph.sources[nid])]
        p = n.payload
        if n.kind == COLUMN_SELECT:
            if p.columns is not None:
                d = len(p.columns)
            else:
                if p.indices and (min(p.indices) < 0 or max(p.indices) >= ins[0]):
                    raise PipelineError(f"node {nid!r}: selected index out of range for width {ins[0]} of {n.inputs[0]!r}")
                d = len(p.indices)
        elif n.kind == ONEHOT:
            d = p.cardinality
        elif n.kind == HASH_ENCODE:
            d = p.width
        elif n.kind == LDA:
            d = p.n_topics
        elif n.kind == STANDARDIZE:
            if ins[0] != len(p.mean):
                raise _dim_error(nid, n.inputs[0], len(p.mean), ins[0])
            d = ins[0]
        elif n.kind == PCA:
            if ins[0] != p.n_features:
                raise _dim_error(nid, n.inputs[0], p.n_features, ins[0])
            d = p.k
        elif n.kind == TREE_ENSEMBLE:
            if ins[0] != p.n_features:
                raise _dim_error(nid, n.inputs[0], p.n_features, ins[0])
            d = 1
        elif n.kind == LINEAR:
            if ins[0] != p.n_features:
                raise _dim_error(nid, n.inputs[0], p.n_features, ins[0])
            d = 1
        elif n.kind == LEAF_ONEHOT:
            up = graph.node(n.inputs[0])
            if up.kind != TREE_ENSEMBLE:
                raise PipelineError(f"node {nid!r}: leaf_onehot must consume a tree_ensemble, got {up.kind}")
            d = up.payload.n_leaves
        elif n.kind == CONCAT:
            d = sum(ins)
        elif n.kind == SIGMOID:
            d = ins[0]
        dims[nid] = d
    if dims[graph.sink] != 1:
        raise PipelineError(f"sink {graph.sink!r} must output a scalar, has width {dims[graph.sink]}")
    graph.order, graph.dims = order, dims
    return graph


# -- reference execution ------------------------------------------------------

def _columns_of(data) -> Mapping[str, np.ndarray]:
    if isinstance(data, Dataset):
        return {**data.numeric_values, **data.categorical_values}
    return {k: np.atleast_1d(np.asarray(v)) for k, v in data.items()}


def _numeric_block(cols, names, nid):
    missing = [c for c in names if c not in cols]
    if missing:
        raise PipelineError(f"node {nid!r}: input lacks columns {missing}")
    if not names:
        n_rows = len(next(iter(cols.values()))) if cols else 0
        return np.zeros((n_rows, 0))
    return np.column_stack([np.asarray(cols[c], dtype=np.float64) for c in names])


def execute(graph: PipelineGraph, data) -> dict[str, np.ndarray]:
    """Run every node in topological order; returns each node's output matrix.

    ``data`` is a Dataset or a mapping from column name to values.
    """
    if not graph.order:
        validate(graph)
    cols = _columns_of(data)
    out: dict[str, np.ndarray] = {}
    for nid in graph.order:
        n = graph.node(nid)
        p = n.payload
        xs = [out[s] for s in n.inputs]
        if not n.inputs and isinstance(graph.sources.get(nid), list):
            xs = [_numeric_block(cols, graph.sources[nid], nid)]
        if n.kind == COLUMN_SELECT:
            if p.columns is not None:
                y = _numeric_block(cols, p.columns, nid)
            else:
                y = xs[0][:, p.indices]
        elif n.kind == ONEHOT:
            y = p.transform(cols[graph.sources[nid]])
        elif n.kind == HASH_ENCODE:
            y = hash_onehot(cols[graph.sources[nid]], p.bits)
        elif n.kind == LDA:
            y = p.transform(cols[graph.sources[nid]])
        elif n.kind == STANDARDIZE:
            y = (xs[0] - p.mean) / p.scale
        elif n.kind == PCA:
            y = p.transform(xs[0])
        elif n.kind == TREE_ENSEMBLE:
            y = p.predict(xs[0])[:, None]
        elif n.kind == LINEAR:
            y = p.decision_function(xs[0])[:, None]
        elif n.kind == LEAF_ONEHOT:
            up = graph.node(n.inputs[0])
            y = leaf_onehot(up.payload, out[up.inputs[0]])
        elif n.kind == CONCAT:
            y = np.concatenate(xs, axis=1)
        elif n.kind == SIGMOID:
            y = expit(xs[0])
        else:  # pragma: no cover - guarded by validate
            raise PipelineError(f"unknown node kind {n.kind!r}")
        out[nid] = np.asarray(y, dtype=np.float64)
    return out


def pipeline_predict_batch(graph: PipelineGraph, data) -> np.ndarray:
    return execute(graph, data)[graph.sink][:, 0]


def pipeline_predict(graph: PipelineGraph, row: Mapping[str, Any]) -> float:
    """Score of a single record (column name -> value)."""
    return float(pipeline_predict_batch(graph, {k: [v] for k, v in row.items()})[0])


def tree_margins(graph: PipelineGraph, data) -> np.ndarray:
    """Per-row distance from each tree input to its nearest threshold, over all ensembles."""
    out = execute(graph, data)
    n_rows = out[graph.sink].shape[0]
    best = np.full(n_rows, np.inf)
    for n in graph.nodes_of_kind(TREE_ENSEMBLE):
        best = np.minimum(best, n.payload.min_margin(out[n.inputs[0]]))
    return best


# -- serialization ------------------------------------------------------------

def _tree_to_dict(t: Tree) -> dict:
    return {
        "root": t.root,
        "kind": [n.kind for n in t.nodes],
        "feature": [n.feature for n in t.nodes],
        "threshold": [n.threshold for n in t.nodes],
        "left": [n.left for n in t.nodes],
        "right": [n.right for n in t.nodes],
        "value": [n.value for n in t.nodes],
    }


def _tree_from_dict(d: dict) -> Tree:
    nodes = [TreeNode(k, f, th, l, r, v) for k, f, th, l, r, v in
             zip(d["kind"], d["feature"], d["threshold"], d["left"], d["right"], d["value"])]
    return Tree(nodes, d["root"])


def _payload_to_dict(kind: str, p) -> dict | None:
    if kind == ONEHOT:
        return {"vocabulary": p.vocabulary}
    if kind == HASH_ENCODE:
        return {"bits": p.bits}
    if kind == LDA:
        return {"vocabulary": p.vocabulary, "doc_topic": p.doc_topic.tolist()}
    if kind == STANDARDIZE:
        return {"mean": p.mean.tolist(), "scale": p.scale.tolist()}
    if kind == PCA:
        return {"mean": p.mean.tolist(), "components": p.components.tolist()}
    if kind == TREE_ENSEMBLE:
        return {"base_score": p.base_score, "n_features": p.n_features,
                "trees": [_tree_to_dict(t) for t in p.trees]}
    if kind == LINEAR:
        return {"weights": p.weights.tolist(), "bias": p.bias}
    if kind == COLUMN_SELECT:
        return {"columns": p.columns} if p.columns is not None else {"indices": p.indices}
    return None


def _payload_from_dict(kind: str, d):
    if kind == ONEHOT:
        return OneHotVocab(dict(d["vocabulary"]))
    if kind == HASH_ENCODE:
        return HashEncoder(int(d["bits"]))
    if kind == LDA:
        return LdaModel(np.array(d["doc_topic"], dtype=np.float64), dict(d["vocabulary"]))
    if kind == STANDARDIZE:
        return Standardizer(d["mean"], d["scale"])
    if kind == PCA:
        return PcaModel(np.array(d["mean"]), np.array(d["components"]))
    if kind == TREE_ENSEMBLE:
        return TreeEnsemble([_tree_from_dict(t) for t in d["trees"]], float(d["base_score"]), int(d["n_features"]))
    if kind == LINEAR:
        return LinearModel(np.array(d["weights"], dtype=np.float64), float(d["bias"]))
    if kind == COLUMN_SELECT:
        return ColumnSelection(columns=d.get("columns"), indices=d.get("indices"))
    return None


def serialize(graph: PipelineGraph) -> dict:
    """JSON-ready document; floats use shortest round-trip decimal form."""
    validate(graph)
    return {
        "version": PIPELINE_VERSION,
        "sources": dict(graph.sources),
        "sink": graph.sink,
        "nodes": [
            {"id": n.id, "kind": n.kind, "inputs": list(n.inputs), "payload": _payload_to_dict(n.kind, n.payload)}
            for n in graph.nodes
        ],
    }


def deserialize(doc: dict) -> PipelineGraph:
    if "version" not in doc:
        raise PipelineError("pipeline document is missing 'version'")
    if doc["version"] != PIPELINE_VERSION:
        raise PipelineError(f"unsupported pipeline version {doc['version']!r}")
    nodes = []
    for nd in doc["nodes"]:
        if nd["kind"] not in KINDS:
            raise PipelineError(f"unknown node kind {nd['kind']!r}")
        nodes.append(OperatorNode(nd["id"], nd["kind"], _payload_from_dict(nd["kind"], nd.get("payload")),
                                  list(nd.get("inputs", []))))
    return validate(PipelineGraph(nodes, dict(doc.get("sources", {})), doc["sink"]))


def save_pipeline(graph: PipelineGraph, path) -> None:
    Path(path).write_text(json.dumps(serialize(graph), indent=1) + "\n", encoding="utf-8")


def load_pipeline(path) -> PipelineGraph:
    with open(path, encoding="utf-8") as fh:
        return deserialize(json.load(fh))


# -- canned scenario wiring ---------------------------------------------------

def _feature_nodes(numeric_columns, encoders):
    """Entry nodes for numeric columns and per-column categorical encoders.

    ``encoders`` is a list of (column, node_kind, payload[, select_indices]).
    Returns (nodes, sources, output ids in concat order).
    """
    nodes, sources, outs = [], {}, []
    if numeric_columns:
        nodes.append(OperatorNode("numeric", COLUMN_SELECT, ColumnSelection(columns=list(numeric_columns))))
        outs.append("numeric")
    for enc in encoders:
        column, kind, payload = enc[:3]
        nid = f"{kind}:{column}"
        nodes.append(OperatorNode(nid, kind, payload))
        sources[nid] = column
        if len(enc) > 3 and enc[3] is not None:
            sel = f"select:{column}"
            nodes.append(OperatorNode(sel, COLUMN_SELECT, ColumnSelection(indices=list(enc[3])), [nid]))
            nid = sel
        outs.append(nid)
    return nodes, sources, outs


def _join(nodes, outs, nid):
    if len(outs) == 1:
        return outs[0]
    nodes.append(OperatorNode(nid, CONCAT, None, list(outs)))
    return nid


def build_scenario1(numeric_columns, encoders, gbdt: TreeEnsemble) -> PipelineGraph:
    """Encoded categoricals and numeric columns concatenated into a tree ensemble."""
    nodes, sources, outs = _feature_nodes(numeric_columns, encoders)
    feats = _join(nodes, outs, "features")
    nodes.append(OperatorNode("gbdt", TREE_ENSEMBLE, gbdt, [feats]))
    return validate(PipelineGraph(nodes, sources, "gbdt"))


def build_scenario2(numeric_columns, encoders, pca: PcaModel, gbdt: TreeEnsemble,
                    linear: LinearModel, pca_select=None) -> PipelineGraph:
    """PCA -> GBDT -> leaf indicators, concatenated with the raw input into a linear model."""
    nodes, sources, outs = _feature_nodes(numeric_columns, encoders)
    x = _join(nodes, outs, "x")
    pca_in = x
    if pca_select is not None:
        nodes.append(OperatorNode("select:pca", COLUMN_SELECT, ColumnSelection(indices=list(pca_select)), [x]))
        pca_in = "select:pca"
    nodes.append(OperatorNode("pca", PCA, pca, [pca_in]))
    nodes.append(OperatorNode("gbdt", TREE_ENSEMBLE, gbdt, ["pca"]))
    nodes.append(OperatorNode("leaves", LEAF_ONEHOT, None, ["gbdt"]))
    nodes.append(OperatorNode("joint", CONCAT, None, ["leaves", x]))
    nodes.append(OperatorNode("linear", LINEAR, linear, ["joint"]))
    return validate(PipelineGraph(nodes, sources, "linear"))


def count_select(X, threshold: int = 1) -> list[int]:
    """Indices of columns with at least ``threshold`` nonzero entries."""
    counts = np.count_nonzero(np.asarray(X), axis=0)
    return [int(i) for i in np.nonzero(counts >= threshold)[0]]
