import numpy as np
import pytest

from pipegrad.trainers.trees import Tree, TreeEnsemble, TreeNode


def figure_tree(thresholds=(0.5, 0.5, 0.5, 0.5), values=(10.0, 20.0, 30.0, 40.0, 50.0)):
    """Four-decision, five-leaf tree.

    n1 (x0) -> left: n2 (x1) -> left: n3 (x2) -> l1 | l2 ; right: l3
            -> right: n4 (x3) -> l4 | l5
    Leaf l4 is reached iff x0 > t1 and x3 <= t4.
    """
    t1, t2, t3, t4 = thresholds
    N = TreeNode
    nodes = [
        N.split(0, t1, 1, 6),      # n1
        N.split(1, t2, 2, 5),      # n2
        N.split(2, t3, 3, 4),      # n3
        N.leaf(values[0]), N.leaf(values[1]),
        N.leaf(values[2]),
        N.split(3, t4, 7, 8),      # n4
        N.leaf(values[3]), N.leaf(values[4]),
    ]
    return Tree(nodes)


def random_tree(rng, n_features, max_leaves):
    """Random binary tree grown by splitting random leaves."""
    nodes = [TreeNode.leaf(rng.normal())]
    leaves = [0]
    target = int(rng.integers(1, max_leaves + 1))
    while len(leaves) < target:
        nid = leaves.pop(int(rng.integers(len(leaves))))
        l, r = len(nodes), len(nodes) + 1
        nodes += [TreeNode.leaf(rng.normal()), TreeNode.leaf(rng.normal())]
        nodes[nid] = TreeNode.split(int(rng.integers(n_features)), float(rng.normal()), l, r)
        leaves += [l, r]
    return Tree(nodes)


def random_ensemble(seed, n_features=4, n_trees=3, max_leaves=6):
    rng = np.random.default_rng(seed)
    trees = [random_tree(rng, n_features, max_leaves) for _ in range(n_trees)]
    return TreeEnsemble(trees, float(rng.normal()), n_features)


@pytest.fixture
def fig_tree():
    return figure_tree()
