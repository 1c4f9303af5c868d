import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipegrad import pipeline_ir as ir
from pipegrad.pipeline_ir import (
    ColumnSelection, HashEncoder, OperatorNode, PipelineError, PipelineGraph, Standardizer,
)
from pipegrad.scenarios import PipelineConfig, fit_pipeline
from pipegrad.synthetic import make_fixture
from pipegrad.trainers import (
    LinearModel, OneHotVocab, fit_pca, leaf_onehot, predict_ensemble, train_gbdt, train_linear_sdca,
)


def _linear(d, seed=0):
    rng = np.random.default_rng(seed)
    return LinearModel(rng.normal(size=d), float(rng.normal()))


class TestValidate:
    def test_single_linear_node(self):
        g = ir.validate(PipelineGraph([OperatorNode("lin", ir.LINEAR, _linear(3))],
                                      {"lin": ["a", "b", "c"]}, "lin"))
        assert g.order == ["lin"]

    def test_self_loop_is_cycle(self):
        g = PipelineGraph([OperatorNode("a", ir.SIGMOID, None, ["a"])], {}, "a")
        with pytest.raises(PipelineError, match="cycle"):
            ir.validate(g)

    def test_two_node_cycle_names_path(self):
        g = PipelineGraph([OperatorNode("a", ir.SIGMOID, None, ["b"]),
                           OperatorNode("b", ir.SIGMOID, None, ["a"])], {}, "a")
        with pytest.raises(PipelineError, match="cycle through"):
            ir.validate(g)

    def test_concat_dimension_mismatch(self):
        nodes = [
            OperatorNode("p", ir.COLUMN_SELECT, ColumnSelection(columns=["a", "b", "c"])),
            OperatorNode("q", ir.COLUMN_SELECT, ColumnSelection(columns=["d", "e", "f", "g", "h"])),
            OperatorNode("cat", ir.CONCAT, None, ["p", "q"]),
            OperatorNode("lin", ir.LINEAR, _linear(7), ["cat"]),
        ]
        with pytest.raises(PipelineError, match="expects 7 inputs but 'cat' provides 8"):
            ir.validate(PipelineGraph(nodes, {}, "lin"))

    def test_two_sinks_rejected(self):
        nodes = [
            OperatorNode("p", ir.COLUMN_SELECT, ColumnSelection(columns=["a"])),
            OperatorNode("l1", ir.LINEAR, _linear(1), ["p"]),
            OperatorNode("l2", ir.LINEAR, _linear(1), ["p"]),
        ]
        with pytest.raises(PipelineError, match="exactly one sink"):
            ir.validate(PipelineGraph(nodes, {}, "l1"))

    def test_payload_kind_mismatch(self):
        nodes = [OperatorNode("lin", ir.LINEAR, HashEncoder(3))]
        with pytest.raises(PipelineError, match="payload"):
            ir.validate(PipelineGraph(nodes, {"lin": ["a"]}, "lin"))

    def test_leaf_onehot_needs_ensemble(self):
        nodes = [
            OperatorNode("p", ir.COLUMN_SELECT, ColumnSelection(columns=["a"])),
            OperatorNode("h", ir.LEAF_ONEHOT, None, ["p"]),
            OperatorNode("lin", ir.LINEAR, _linear(1), ["h"]),
        ]
        with pytest.raises(PipelineError, match="tree_ensemble"):
            ir.validate(PipelineGraph(nodes, {}, "lin"))


class TestExecute:
    def test_standardize_then_linear(self):
        w, b = np.array([0.5, -1.0]), 0.25
        nodes = [
            OperatorNode("s", ir.STANDARDIZE, Standardizer([0.0, 0.0], [1.0, 1.0])),
            OperatorNode("lin", ir.LINEAR, LinearModel(w, b), ["s"]),
        ]
        g = PipelineGraph(nodes, {"s": ["x", "y"]}, "lin")
        assert ir.pipeline_predict(g, {"x": 2.0, "y": 3.0}) == 2.0 * 0.5 - 3.0 + 0.25

    def test_scenario1_equals_ensemble_on_encoded_row(self):
        ds = make_fixture(800, 0)
        g = fit_pipeline("s1_onehot", ds, PipelineConfig(num_trees=5, max_leaves=6))
        ens = g.node("gbdt").payload
        v1, v2 = g.node("onehot:c1").payload, g.node("onehot:c2").payload
        for i in range(0, 800, 97):
            r = ds.row(i)
            x = np.concatenate([[r["x1"], r["x2"]], v1.encode(r["c1"]), v2.encode(r["c2"])])
            assert ir.pipeline_predict(g, r) == predict_ensemble(ens, x)

    def test_scenario2_hand_composed(self):
        ds = make_fixture(600, 1)
        g = fit_pipeline("s2", ds, PipelineConfig(num_trees=4, max_leaves=4, pca_k=3, sdca_epochs=5))
        pca, ens, lin = (g.node(k).payload for k in ("pca", "gbdt", "linear"))
        v1, v2 = g.node("onehot:c1").payload, g.node("onehot:c2").payload
        for i in range(5):
            r = ds.row(i)
            x = np.concatenate([[r["x1"], r["x2"]], v1.encode(r["c1"]), v2.encode(r["c2"])])  # step 0: raw input
            z = (x - pca.mean) @ pca.components.T                                             # (1) PCA
            leaves = leaf_onehot(ens, z)                                                       # (2)+(3) trees, leaf ids
            joint = np.concatenate([leaves, x])                                                # (4) concat with raw x
            expected = joint @ lin.weights + lin.bias                                          # (5) linear model
            assert ir.pipeline_predict(g, r) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_row_order_independent(self):
        ds = make_fixture(300, 2)
        g = fit_pipeline("s1_hash", ds, PipelineConfig(num_trees=3, max_leaves=4, hash_bits=5))
        perm = np.random.default_rng(0).permutation(300)
        assert np.array_equal(ir.pipeline_predict_batch(g, ds)[perm], ir.pipeline_predict_batch(g, ds.subset(perm)))

    def test_unseen_category_scores(self):
        ds = make_fixture(300, 3)
        g = fit_pipeline("s1_onehot", ds, PipelineConfig(num_trees=3, max_leaves=4))
        r = ds.row(0)
        r["c1"] = "never-seen"
        assert np.isfinite(ir.pipeline_predict(g, r))


class TestSerialization:
    def test_round_trip_scenario1(self, tmp_path):
        ds = make_fixture(500, 0)
        g = fit_pipeline("s1_onehot", ds, PipelineConfig(num_trees=4, max_leaves=5))
        ir.save_pipeline(g, tmp_path / "p.json")
        back = ir.load_pipeline(tmp_path / "p.json")
        assert [n.id for n in back.nodes] == [n.id for n in g.nodes]
        assert back.sources == g.sources and back.sink == g.sink
        assert back.node("onehot:c1").payload.vocabulary == g.node("onehot:c1").payload.vocabulary
        e0, e1 = g.node("gbdt").payload, back.node("gbdt").payload
        assert e1.base_score == e0.base_score
        for t0, t1 in zip(e0.trees, e1.trees):
            assert t0.nodes == t1.nodes
        assert np.array_equal(ir.pipeline_predict_batch(back, ds), ir.pipeline_predict_batch(g, ds))

    def test_round_trip_scenario2_lda(self, tmp_path):
        ds = make_fixture(400, 4)
        for sc in ("s2", "s1_lda"):
            g = fit_pipeline(sc, ds, PipelineConfig(num_trees=3, max_leaves=4, pca_k=2, sdca_epochs=3,
                                                    lda_iterations=10))
            back = ir.deserialize(json.loads(json.dumps(ir.serialize(g))))
            assert np.array_equal(ir.pipeline_predict_batch(back, ds), ir.pipeline_predict_batch(g, ds))

    def test_missing_version(self):
        doc = ir.serialize(PipelineGraph([OperatorNode("lin", ir.LINEAR, _linear(2))], {"lin": ["a", "b"]}, "lin"))
        del doc["version"]
        with pytest.raises(PipelineError, match="version"):
            ir.deserialize(doc)

    @given(st.floats(allow_nan=False, allow_infinity=False, width=64))
    def test_threshold_bit_exact(self, theta):
        from pipegrad.trainers import Tree, TreeEnsemble, TreeNode
        t = Tree([TreeNode.split(0, theta, 1, 2), TreeNode.leaf(-1.0), TreeNode.leaf(1.0)])
        nodes = [OperatorNode("x", ir.COLUMN_SELECT, ColumnSelection(columns=["a"])),
                 OperatorNode("t", ir.TREE_ENSEMBLE, TreeEnsemble([t], 0.1, 1), ["x"])]
        doc = json.loads(json.dumps(ir.serialize(PipelineGraph(nodes, {}, "t"))))
        back = ir.deserialize(doc).node("t").payload
        assert back.trees[0].nodes[0].threshold == theta
        assert back.base_score == 0.1


class TestCountSelect:
    def test_threshold(self):
        X = np.array([[0, 1, 0], [0, 1, 1], [0, 0, 0]])
        assert ir.count_select(X) == [1, 2]
        assert ir.count_select(X, 2) == [1]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000))
    def test_selected_columns_nonempty(self, seed):
        X = (np.random.default_rng(seed).random((10, 6)) < 0.15).astype(float)
        keep = ir.count_select(X)
        assert all(X[:, j].any() for j in keep)
        assert all(not X[:, j].any() for j in set(range(6)) - set(keep))


class TestScenarioBuilders:
    def test_s2_node_order(self):
        ds = make_fixture(400, 0)
        g = fit_pipeline("s2", ds, PipelineConfig(num_trees=3, max_leaves=4, pca_k=2, sdca_epochs=3))
        kinds = [g.node(n).kind for n in g.order]
        tail = [k for k in kinds if k in (ir.PCA, ir.TREE_ENSEMBLE, ir.LEAF_ONEHOT, ir.LINEAR)]
        assert tail == [ir.PCA, ir.TREE_ENSEMBLE, ir.LEAF_ONEHOT, ir.LINEAR]
        assert g.node("joint").inputs == ["leaves", "x"]

    def test_hash_requires_bits(self):
        with pytest.raises(ValueError, match="hash_bits"):
            fit_pipeline("s1_hash", make_fixture(100, 0))

    def test_manual_scenario2(self):
        ds = make_fixture(300, 5)
        X = ds.numeric_matrix()
        pca = fit_pca(X, 2)
        Z = pca.transform(X)
        ens = train_gbdt(Z, ds.labels, 2, 3)
        lin = train_linear_sdca(np.hstack([leaf_onehot(ens, Z), X]), ds.labels, 1e-2, 3)
        g = ir.build_scenario2(ds.numeric_columns, [], pca, ens, lin)
        assert g.dims["joint"] == ens.n_leaves + 2
        assert isinstance(g.node("numeric").payload, ColumnSelection)

    def test_onehot_payload_type(self):
        ds = make_fixture(100, 0)
        g = fit_pipeline("s1_onehot", ds, PipelineConfig(num_trees=1, max_leaves=2))
        assert isinstance(g.node("onehot:c2").payload, OneHotVocab)
