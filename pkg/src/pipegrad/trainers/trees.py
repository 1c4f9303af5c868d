"""Binary decision trees, boosted ensembles and a leaf-wise logistic GBDT trainer."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INTERNAL = "internal"
LEAF = "leaf"

HESSIAN_FLOOR = 1e-6
MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    kind: str
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0

    @classmethod
    def leaf(cls, value: float) -> "TreeNode":
        return cls(LEAF, value=float(value))

    @classmethod
    def split(cls, feature: int, threshold: float, left: int, right: int) -> "TreeNode":
        return cls(INTERNAL, feature=int(feature), threshold=float(threshold), left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.kind == LEAF


@dataclass(eq=False)
class Tree:
    nodes: list[TreeNode]
    root: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self, n_features: int | None = None) -> None:
        seen = set()
        stack = [self.root]
        while stack:
            nid = stack.pop()
            if not 0 <= nid < len(self.nodes):
                raise ValueError(f"tree references missing node {nid}")
            if nid in seen:
                raise ValueError(f"node {nid} reached twice: not a tree")
            seen.add(nid)
            node = self.nodes[nid]
            if node.kind == INTERNAL:
                if n_features is not None and not 0 <= node.feature < n_features:
                    raise ValueError(f"node {nid} tests feature {node.feature}, input has {n_features}")
                stack.extend((node.right, node.left))
            elif node.kind != LEAF:
                raise ValueError(f"node {nid}: unknown kind {node.kind!r}")
        if len(seen) != len(self.nodes):
            raise ValueError(f"{len(self.nodes) - len(seen)} nodes unreachable from root")

    def preorder(self) -> list[int]:
        order, stack = [], [self.root]
        while stack:
            nid = stack.pop()
            order.append(nid)
            node = self.nodes[nid]
            if node.kind == INTERNAL:
                stack.extend((node.right, node.left))
        return order

    @cached_property
    def internal_ids(self) -> list[int]:
        """Internal node ids in preorder; this is the decision-unit order after translation."""
        return [n for n in self.preorder() if self.nodes[n].kind == INTERNAL]

    @cached_property
    def leaf_ids(self) -> list[int]:
        """Leaf ids left to right; this is the leaf-unit and leaf-indicator order."""
        return [n for n in self.preorder() if self.nodes[n].kind == LEAF]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)

    @property
    def n_internal(self) -> int:
        return len(self.internal_ids)

    def leaf_paths(self) -> list[list[tuple[int, bool]]]:
        """For each leaf (in ``leaf_ids`` order), the (internal node, went_right) pairs from the root."""
        paths = {}
        stack = [(self.root, [])]
        while stack:
            nid, path = stack.pop()
            node = self.nodes[nid]
            if node.kind == LEAF:
                paths[nid] = path
            else:
                stack.append((node.right, path + [(nid, True)]))
                stack.append((node.left, path + [(nid, False)]))
        return [paths[n] for n in self.leaf_ids]

    @cached_property
    def _arrays(self):
        feat = np.array([n.feature for n in self.nodes], dtype=np.int64)
        thr = np.array([n.threshold for n in self.nodes], dtype=np.float64)
        left = np.array([n.left for n in self.nodes], dtype=np.int64)
        right = np.array([n.right for n in self.nodes], dtype=np.int64)
        value = np.array([n.value for n in self.nodes], dtype=np.float64)
        is_leaf = np.array([n.kind == LEAF for n in self.nodes])
        return feat, thr, left, right, value, is_leaf

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Id of the leaf reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        feat, thr, left, right, _, is_leaf = self._arrays
        node = np.full(X.shape[0], self.root, dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = ~is_leaf[node]
        while active.any():
            r, cur = rows[active], node[active]
            go_right = X[r, feat[cur]] > thr[cur]
            node[active] = np.where(go_right, right[cur], left[cur])
            active = ~is_leaf[node]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._arrays[4][self.apply(X)]

    def leaf_position(self, X: np.ndarray) -> np.ndarray:
        """Index (into ``leaf_ids``) of the leaf each row reaches."""
        lookup = np.full(len(self.nodes), -1, dtype=np.int64)
        lookup[self.leaf_ids] = np.arange(self.n_leaves)
        return lookup[self.apply(X)]


def predict_tree(tree: Tree, x) -> float:
    """Walk from the root: right iff ``x[i(n)] > theta_n``, return the reached leaf value."""
    node = tree.nodes[tree.root]
    while node.kind == INTERNAL:
        node = tree.nodes[node.right if x[node.feature] > node.threshold else node.left]
    return node.value


@dataclass(eq=False)
class TreeEnsemble:
    trees: list[Tree]
    base_score: float = 0.0
    n_features: int = 0

    def __post_init__(self):
        for t in self.trees:
            t.validate(self.n_features)

    @property
    def n_leaves(self) -> int:
        return sum(t.n_leaves for t in self.trees)

    @property
    def n_internal(self) -> int:
        return sum(t.n_internal for t in self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out = out + t.predict(X)
        return out

    def min_margin(self, X: np.ndarray) -> np.ndarray:
        """Per-row distance to the nearest threshold over every internal node."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        best = np.full(X.shape[0], np.inf)
        for t in self.trees:
            for nid in t.internal_ids:
                node = t.nodes[nid]
                best = np.minimum(best, np.abs(X[:, node.feature] - node.threshold))
        return best


def predict_ensemble(ens: TreeEnsemble, x) -> float:
    total = ens.base_score
    for t in ens.trees:
        total = total + predict_tree(t, x)
    return total


def leaf_onehot(ens: TreeEnsemble, X) -> np.ndarray:
    """Concatenated per-tree indicator blocks marking the reached leaf.

    A 1-D ``X`` is treated as a single row and returns a 1-D vector.
    """
    X_arr = np.asarray(X, dtype=np.float64)
    single = X_arr.ndim == 1
    X_arr = np.atleast_2d(X_arr)
    out = np.zeros((X_arr.shape[0], ens.n_leaves))
    offset = 0
    rows = np.arange(X_arr.shape[0])
    for t in ens.trees:
        out[rows, offset + t.leaf_position(X_arr)] = 1.0
        offset += t.n_leaves
    return out[0] if single else out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _best_split(X, g, h, idx):
    """Best (gain, feature, threshold, left_idx, right_idx) for the rows ``idx``.

    Ties go to the lower feature index, then the lower threshold.
    """
    G, H = g[idx].sum(), h[idx].sum()
    parent = G * G / max(H, HESSIAN_FLOOR)
    best = (MIN_GAIN, -1, 0.0, None)
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        cg = np.cumsum(g[idx][order])[:-1]
        ch = np.cumsum(h[idx][order])[:-1]
        gain = (cg * cg / np.maximum(ch, HESSIAN_FLOOR)
                + (G - cg) ** 2 / np.maximum(H - ch, HESSIAN_FLOOR) - parent)
        gain = np.where(distinct, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(gain[i]), f, float(thr), None)
    gain, f, thr, _ = best
    if f < 0:
        return None
    mask = X[idx, f] > thr
    return gain, f, thr, idx[~mask], idx[mask]


def _grow_tree(X, g, h, learning_rate, max_leaves):
    """Leaf-wise growth: repeatedly split the leaf with the largest gain."""
    nodes: list[TreeNode] = []

    def leaf_value(idx):
        return -learning_rate * g[idx].sum() / max(h[idx].sum(), HESSIAN_FLOOR)

    all_idx = np.arange(X.shape[0])
    nodes.append(TreeNode.leaf(leaf_value(all_idx)))
    frontier = [(0, all_idx, _best_split(X, g, h, all_idx))]
    n_leaves = 1
    while n_leaves < max_leaves:
        candidates = [i for i, (_, _, s) in enumerate(frontier) if s is not None]
        if not candidates:
            break
        pick = max(candidates, key=lambda i: (frontier[i][2][0], -i))
        nid, _, (_, f, thr, left_idx, right_idx) = frontier.pop(pick)
        lid, rid = len(nodes), len(nodes) + 1
        nodes.append(TreeNode.leaf(leaf_value(left_idx)))
        nodes.append(TreeNode.leaf(leaf_value(right_idx)))
        nodes[nid] = TreeNode.split(f, thr, lid, rid)
        frontier.append((lid, left_idx, _best_split(X, g, h, left_idx)))
        frontier.append((rid, right_idx, _best_split(X, g, h, right_idx)))
        n_leaves += 1

    leaf_of_row = np.empty(X.shape[0], dtype=np.int64)
    for nid, idx, _ in frontier:
        leaf_of_row[idx] = nid
    return _renumber(nodes), leaf_of_row, nodes


def _renumber(nodes: list[TreeNode]) -> Tree:
    """Relabel node ids in preorder so that the root is 0."""
    tmp = Tree.__new__(Tree)
    tmp.nodes, tmp.root = nodes, 0
    order = Tree.preorder(tmp)
    new_id = {old: new for new, old in enumerate(order)}
    out = []
    for old in order:
        n = nodes[old]
        if n.kind == LEAF:
            out.append(TreeNode.leaf(n.value))
        else:
            out.append(TreeNode.split(n.feature, n.threshold, new_id[n.left], new_id[n.right]))
    return Tree(out, 0)


def train_gbdt(X, y, num_trees: int = 100, max_leaves: int = 30,
               learning_rate: float = 0.1, seed: int = 0) -> TreeEnsemble:
    """Gradient boosting on the logistic loss with Newton leaf values.

    The learning rate is folded into the stored leaf values. ``seed`` is
    accepted for interface symmetry; the trainer uses no randomness.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has shape {X.shape}, labels {y.shape}")
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    if max_leaves < 2:
        raise ValueError("max_leaves must be >= 2")
    p = y.mean() if len(y) else 0.0
    if p <= 0.0 or p >= 1.0:
        raise ValueError("degenerate labels: both classes are required")
    base = float(np.log(p / (1.0 - p)))

    F = np.full(X.shape[0], base)
    trees = []
    for _ in range(num_trees):
        prob = _sigmoid(F)
        g = prob - y
        h = prob * (1.0 - prob)
        tree, leaf_of_row, raw_nodes = _grow_tree(X, g, h, learning_rate, max_leaves)
        values = np.array([n.value for n in raw_nodes])
        F = F + values[leaf_of_row]
        trees.append(tree)
    return TreeEnsemble(trees, base, X.shape[1])
