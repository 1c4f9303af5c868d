"""Classical trainers producing the operators a pipeline is built from."""

from .encoders import OneHotVocab, fit_onehot, hash_onehot, hash_slots
from .lda import LdaModel, build_lda_documents, fit_lda_encoder, fit_lda_gibbs
from .linear import LinearModel, train_linear_sdca
from .pca import PcaModel, fit_pca
from .trees import Tree, TreeEnsemble, TreeNode, leaf_onehot, predict_ensemble, predict_tree, train_gbdt

__all__ = [
    "OneHotVocab", "fit_onehot", "hash_onehot", "hash_slots",
    "LdaModel", "build_lda_documents", "fit_lda_encoder", "fit_lda_gibbs",
    "LinearModel", "train_linear_sdca", "PcaModel", "fit_pca",
    "Tree", "TreeEnsemble", "TreeNode", "leaf_onehot", "predict_ensemble", "predict_tree", "train_gbdt",
]
