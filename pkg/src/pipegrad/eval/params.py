"""Parameter counting per layer."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..netrt.graph import NeuralGraph


@dataclass
class ParamCount:
    per_layer: dict[str, int] = field(default_factory=dict)
    total_trainable: int = 0
    total_all: int = 0

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())

    def to_dict(self) -> dict:
        return {"per_layer": self.per_layer, "total": self.total,
                "total_trainable": self.total_trainable, "total_all": self.total_all}


def count_parameters(net: NeuralGraph, trainable_only: bool = True) -> ParamCount:
    per_layer = {}
    trainable = every = 0
    for layer in net.layers:
        n = 0
        for p in layer.params.values():
            every += p.size
            if p.trainable:
                trainable += p.size
            if p.trainable or not trainable_only:
                n += p.size
        if layer.params:
            per_layer[layer.id] = n
    return ParamCount(per_layer, trainable, every)
