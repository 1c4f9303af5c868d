"""Minibatch fine-tuning with validation-AUC early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..eval.metrics import auc
from .graph import NeuralGraph
from .layers import EVAL, TRAIN
from .loss import loss_logistic
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"divergence at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 10
    patience: int = 10
    seed: int = 0
    eval_every: int = 0  # steps between validation checks; 0 means once per epoch

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class HistoryRow:
    step: int
    loss: float
    valid_auc: float


def take(inputs: dict, idx) -> dict:
    return {k: v[idx] for k, v in inputs.items()}


def write_history(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "valid_auc"])
        for row in history:
            w.writerow([row.step, repr(row.loss), repr(row.valid_auc)])


def finetune(net: NeuralGraph, train: Dataset, valid: Dataset, cfg: TrainConfig):
    """Fine-tune a copy of ``net``; return the best-validation-AUC copy and the history.

    The starting network is evaluated first, so the returned network never
    scores below it on the validation set.
    """
    if valid.rows == 0:
        raise ValueError("validation set is empty")
    net = net.copy()
    x_train, y_train = net.preprocess(train), train.labels
    x_valid, y_valid = net.preprocess(valid), valid.labels
    order_rng = np.random.default_rng(cfg.seed)
    dropout_rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = net.parameters()

    def validate():
        return auc(net.forward(x_valid, EVAL), y_valid)

    start_loss, _ = loss_logistic(net.forward(x_train, EVAL), y_train)
    best_auc = validate()
    best_state = net.state()
    history = [HistoryRow(0, start_loss, best_auc)]
    step, stale, running = 0, 0, []

    def record() -> bool:
        """Log a validation point; True once patience is exhausted."""
        nonlocal best_auc, best_state, stale, running
        score = validate()
        history.append(HistoryRow(step, float(np.mean(running)), score))
        running = []
        if score > best_auc:
            best_auc, best_state, stale = score, net.state(), 0
        else:
            stale += 1
        return stale >= cfg.patience

    n = train.rows
    stopped = False
    for _epoch in range(cfg.max_epochs):
        perm = order_rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            logits = net.forward(take(x_train, idx), TRAIN, dropout_rng)
            loss, dlogits = loss_logistic(logits, y_train[idx])
            step += 1
            if not math.isfinite(loss):
                raise DivergenceError(step)
            net.backward(dlogits)
            adam_step(params, state)
            running.append(loss)
            if cfg.eval_every and step % cfg.eval_every == 0 and record():
                stopped = True
                break
        if stopped:
            break
        if not cfg.eval_every and record():
            break
    if running and not stopped:
        record()
    log.info("finetune: %d steps, best valid AUC %.5f", step, best_auc)
    net.load_state(best_state)
    return net, history
