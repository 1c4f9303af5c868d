"""Agreement between a pipeline and the network translated from it."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from ..data import Dataset
from ..netrt.graph import NeuralGraph
from ..netrt.layers import EVAL, HARD
from ..pipeline_ir import PipelineGraph, pipeline_predict_batch, tree_margins

RELATIVE_TOL = 1e-9


@dataclass
class FidelityReport:
    rows_checked: int
    hard_mismatches: int
    max_soft_abs_deviation: float
    min_margin_seen: float
    excluded_rows: int = 0
    max_hard_abs_deviation: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("max_soft_abs_deviation", "min_margin_seen", "max_hard_abs_deviation"):
            if not np.isfinite(d[k]):
                d[k] = None
        return d


def fidelity_check(graph: PipelineGraph, net: NeuralGraph, rows: Dataset,
                   margin: float = 1e-9) -> FidelityReport:
    """Compare hard-mode network output with the reference pipeline on ``rows``.

    Rows whose tree inputs lie within ``margin`` of some threshold are
    excluded from the mismatch count and reported in ``excluded_rows``. A
    mismatch is a deviation above ``1e-9 * max(1, |reference|)``.
    """
    ref = pipeline_predict_batch(graph, rows)
    margins = tree_margins(graph, rows)
    inputs = net.preprocess(rows)
    hard = net.forward(inputs, HARD)
    soft = net.forward(inputs, EVAL)
    if net.output_sigmoid:
        hard, soft = expit(hard), expit(soft)
    keep = margins > margin
    hard_dev = np.abs(hard - ref)
    mismatches = keep & (hard_dev > RELATIVE_TOL * np.maximum(1.0, np.abs(ref)))
    soft_dev = np.abs(soft - ref)[keep]
    return FidelityReport(
        rows_checked=int(rows.rows),
        hard_mismatches=int(mismatches.sum()),
        max_soft_abs_deviation=float(soft_dev.max()) if soft_dev.size else 0.0,
        min_margin_seen=float(margins.min()) if margins.size else float("inf"),
        excluded_rows=int((~keep).sum()),
        max_hard_abs_deviation=float(hard_dev[keep].max()) if keep.any() else 0.0,
    )
