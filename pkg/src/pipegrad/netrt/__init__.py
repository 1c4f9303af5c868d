"""Differentiable runtime: layers, network graph, loss, Adam and fine-tuning."""

from .layers import (EVAL, HARD, TRAIN, Concat, Context, Dense, Dropout, Embedding, Parameter, ReLU, Scale,
                     Select, ShapeError, Sigmoid, TreeLeaves, TreeSum)
from .graph import NeuralGraph, backward, forward
from .loss import loss_logistic
from .optim import AdamState, adam_step
from .train import DivergenceError, HistoryRow, TrainConfig, finetune, write_history

__all__ = [
    "EVAL", "HARD", "TRAIN", "Parameter", "Context", "ShapeError", "Dense", "Scale", "Embedding",
    "Select", "Concat", "ReLU", "Sigmoid", "Dropout", "TreeLeaves", "TreeSum", "NeuralGraph", "forward", "backward",
    "loss_logistic", "AdamState", "adam_step", "DivergenceError", "HistoryRow",
    "TrainConfig", "finetune", "write_history",
]
