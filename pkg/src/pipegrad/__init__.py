"""Compile trained tabular ML pipelines into differentiable networks and fine-tune them."""

__version__ = "0.1.0"
