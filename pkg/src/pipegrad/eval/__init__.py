"""Metrics and verification: AUC, fidelity, gradient audit, parameter counts."""

from .metrics import accuracy, auc, logloss
from .fidelity import FidelityReport, fidelity_check
from .gradcheck import gradient_check
from .params import ParamCount, count_parameters

__all__ = [
    "accuracy", "auc", "logloss", "FidelityReport", "fidelity_check",
    "gradient_check", "ParamCount", "count_parameters",
]
