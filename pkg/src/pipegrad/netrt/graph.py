"""The compiled network: frozen preprocessors feeding an ordered list of layers."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from ..data import Dataset
from ..trainers.encoders import hash_slots
from .layers import EVAL, HARD, LAYER_KINDS, MODES, Context, Layer, Parameter

NET_VERSION = "pipegrad.net/1"


class CheckpointError(ValueError):
    pass


class NumericColumns:
    """Stacks numeric dataset columns into a float matrix."""

    kind = "numeric"

    def __init__(self, name, columns):
        self.name = name
        self.columns = list(columns)

    @property
    def width(self):
        return len(self.columns)

    def __call__(self, ds: Dataset) -> np.ndarray:
        return ds.numeric_matrix(self.columns)

    def config(self):
        return {"columns": self.columns}


class VocabIndex:
    """Maps a categorical column to vocabulary indices (-1 when unseen)."""

    kind = "vocab_index"

    def __init__(self, name, column, vocabulary):
        self.name = name
        self.column = column
        self.vocabulary = dict(vocabulary)

    def __call__(self, ds: Dataset) -> np.ndarray:
        values = ds.column(self.column)
        return np.array([self.vocabulary.get(str(v), -1) for v in values], dtype=np.int64)

    def config(self):
        return {"column": self.column, "vocabulary": self.vocabulary}


class HashIndex:
    """Maps a categorical column to hash slots."""

    kind = "hash_index"

    def __init__(self, name, column, bits):
        self.name = name
        self.column = column
        self.bits = int(bits)

    def __call__(self, ds: Dataset) -> np.ndarray:
        return hash_slots(ds.column(self.column), self.bits)

    def config(self):
        return {"column": self.column, "bits": self.bits}


PREPROCESSOR_KINDS = {c.kind: c for c in (NumericColumns, VocabIndex, HashIndex)}


class NeuralGraph:
    """Differentiable program compiled from a pipeline (or built directly).

    ``preprocessors`` run outside the differentiable region and produce the
    named inputs that layers consume. ``forward`` returns one logit per row.
    """

    def __init__(self, preprocessors, layers, output, output_sigmoid=False, meta=None):
        self.preprocessors = list(preprocessors)
        self.layers: list[Layer] = list(layers)
        self.output = output
        self.output_sigmoid = bool(output_sigmoid)
        self.meta = dict(meta or {})
        self._forward_mode = None
        self._check()

    def _check(self):
        names = [p.name for p in self.preprocessors]
        known = set(names)
        if len(known) != len(names):
            raise ValueError("duplicate preprocessor names")
        for layer in self.layers:
            for src in layer.inputs:
                if src not in known:
                    raise ValueError(f"layer {layer.id!r} reads {src!r} before it is produced")
            if layer.id in known:
                raise ValueError(f"duplicate layer id {layer.id!r}")
            known.add(layer.id)
        if self.output not in known:
            raise ValueError(f"output {self.output!r} is not produced by the network")
        owner = {}
        for layer in self.layers:
            for p in layer.params.values():
                if p.id in owner:
                    raise ValueError(f"parameter {p.id!r} owned by two layers")
                owner[p.id] = layer.id

    # -- parameters -----------------------------------------------------
    def parameters(self, trainable_only=False) -> list[Parameter]:
        out = []
        for layer in self.layers:
            for p in layer.params.values():
                if p.trainable or not trainable_only:
                    out.append(p)
        return out

    def param(self, pid: str) -> Parameter:
        for p in self.parameters():
            if p.id == pid:
                return p
        raise KeyError(pid)

    def layer(self, lid: str) -> Layer:
        for layer in self.layers:
            if layer.id == lid:
                return layer
        raise KeyError(lid)

    def state(self) -> dict[str, np.ndarray]:
        return {p.id: p.value.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value = np.array(state[p.id], dtype=np.float64)
            p.grad = np.zeros_like(p.value)

    def copy(self) -> "NeuralGraph":
        return copy.deepcopy(self)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = np.zeros_like(p.value)

    # -- execution ------------------------------------------------------
    def preprocess(self, ds: Dataset) -> dict[str, np.ndarray]:
        return {p.name: p(ds) for p in self.preprocessors}

    def forward(self, inputs: dict, mode: str = EVAL, rng=None) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        ctx = Context(mode, rng)
        values = dict(inputs)
        for layer in self.layers:
            values[layer.id] = layer.forward([values[s] for s in layer.inputs], ctx)
        self._forward_mode = mode
        out = values[self.output]
        if out.ndim != 2 or out.shape[1] != 1:
            raise ValueError(f"output layer {self.output!r} must have width 1, got shape {out.shape}")
        return out[:, 0]

    def backward(self, dlogits) -> None:
        if self._forward_mode is None:
            raise RuntimeError("backward called without a forward pass")
        if self._forward_mode == HARD:
            raise RuntimeError("non-differentiable mode: hard forward has no gradient")
        self.zero_grad()
        grads = {self.output: np.asarray(dlogits, dtype=np.float64).reshape(-1, 1)}
        for layer in reversed(self.layers):
            g = grads.pop(layer.id, None)
            if g is None:
                continue
            for src, gi in zip(layer.inputs, layer.backward(g)):
                if gi is None:
                    continue
                grads[src] = gi if src not in grads else grads[src] + gi
        self._forward_mode = None

    def predict(self, ds: Dataset, mode: str = EVAL) -> np.ndarray:
        return self.forward(self.preprocess(ds), mode)

    # -- checkpoints ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": NET_VERSION,
            "output": self.output,
            "output_sigmoid": self.output_sigmoid,
            "meta": self.meta,
            "preprocessors": [
                {"name": p.name, "kind": p.kind, **p.config()} for p in self.preprocessors
            ],
            "layers": [
                {
                    "id": layer.id,
                    "kind": layer.kind,
                    "inputs": layer.inputs,
                    "config": layer.config(),
                    "params": {
                        name: {
                            "shape": list(p.value.shape),
                            "values": p.value.ravel().tolist(),
                            "trainable": p.trainable,
                            "fan_in": p.fan_in,
                        }
                        for name, p in layer.params.items()
                    },
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NeuralGraph":
        version = doc.get("version")
        if version is None:
            raise CheckpointError("checkpoint is missing 'version'")
        if version != NET_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version!r}")
        pres = []
        for spec in doc["preprocessors"]:
            spec = dict(spec)
            kind = spec.pop("kind")
            if kind not in PREPROCESSOR_KINDS:
                raise CheckpointError(f"unknown preprocessor kind {kind!r}")
            pres.append(PREPROCESSOR_KINDS[kind](**spec))
        layers = []
        for spec in doc["layers"]:
            kind = spec["kind"]
            if kind not in LAYER_KINDS:
                raise CheckpointError(f"unknown layer kind {kind!r}")
            layer = LAYER_KINDS[kind](spec["id"], spec["inputs"], **spec.get("config", {}))
            for name, p in spec["params"].items():
                value = np.array(p["values"], dtype=np.float64).reshape(p["shape"])
                layer.add_param(name, value, p["trainable"], p.get("fan_in", 1))
            layers.append(layer)
        return cls(pres, layers, doc["output"], doc.get("output_sigmoid", False), doc.get("meta"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NeuralGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def forward(net: NeuralGraph, batch: dict, mode: str = EVAL, rng=None) -> np.ndarray:
    return net.forward(batch, mode, rng)


def backward(net: NeuralGraph, dlogits) -> None:
    net.backward(dlogits)
