"""Layer vocabulary of the differentiable runtime.

Every layer implements ``forward(xs, ctx)`` over a list of input arrays and
``backward(g)`` returning one gradient per input (``None`` for integer
inputs). Parameter gradients are accumulated into ``Parameter.grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

TRAIN, EVAL, HARD = "train", "eval", "hard"
MODES = (TRAIN, EVAL, HARD)


class ShapeError(ValueError):
    pass


@dataclass(eq=False)
class Parameter:
    id: str
    value: np.ndarray
    trainable: bool = True
    fan_in: int = 1
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return int(self.value.size)


@dataclass
class Context:
    mode: str = EVAL
    rng: np.random.Generator | None = None


class Layer:
    kind = "layer"

    def __init__(self, id: str, inputs):
        self.id = id
        self.inputs = [inputs] if isinstance(inputs, str) else list(inputs)
        self.params: dict[str, Parameter] = {}
        self._cache = None

    def add_param(self, name, value, trainable=True, fan_in=1) -> Parameter:
        p = Parameter(f"{self.id}.{name}", value, trainable, int(fan_in))
        self.params[name] = p
        return p

    def p(self, name) -> np.ndarray:
        return self.params[name].value

    def config(self) -> dict:
        return {}

    def forward(self, xs, ctx: Context):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"layer {self.id!r}: backward called without a forward pass")
        return self._cache

    def _check_width(self, x, width, what="input"):
        if x.ndim != 2 or x.shape[1] != width:
            raise ShapeError(f"layer {self.id!r}: expected {what} width {width}, got shape {x.shape}")


class Dense(Layer):
    """``y = x W^T + b`` with ``W`` of shape (out, in)."""

    kind = "dense"

    @classmethod
    def build(cls, id, input, W, b, trainable=True):
        layer = cls(id, input)
        W = np.atleast_2d(np.asarray(W, dtype=np.float64))
        layer.add_param("W", W, trainable, W.shape[1])
        layer.add_param("b", np.asarray(b, dtype=np.float64).reshape(W.shape[0]), trainable, W.shape[1])
        return layer

    def forward(self, xs, ctx):
        (x,) = xs
        W = self.p("W")
        self._check_width(x, W.shape[1])
        self._cache = x
        return x @ W.T + self.p("b")

    def backward(self, g):
        x = self._need_cache()
        self.params["W"].grad += g.T @ x
        self.params["b"].grad += g.sum(axis=0)
        return [g @ self.p("W")]


class Scale(Layer):
    """Elementwise affine map ``y = x * w + b``."""

    kind = "scale"

    @classmethod
    def build(cls, id, input, w, b, trainable=True):
        layer = cls(id, input)
        layer.add_param("w", w, trainable, 1)
        layer.add_param("b", b, trainable, 1)
        return layer

    def forward(self, xs, ctx):
        (x,) = xs
        self._check_width(x, self.p("w").shape[0])
        self._cache = x
        return x * self.p("w") + self.p("b")

    def backward(self, g):
        x = self._need_cache()
        self.params["w"].grad += (g * x).sum(axis=0)
        self.params["b"].grad += g.sum(axis=0)
        return [g * self.p("w")]


class Embedding(Layer):
    """Row lookup by integer index; index -1 returns a fixed fallback row."""

    kind = "embedding"

    def __init__(self, id, inputs, fallback=None):
        super().__init__(id, inputs)
        self.fallback = None if fallback is None else np.asarray(fallback, dtype=np.float64)

    @classmethod
    def build(cls, id, input, table, fallback, trainable=True):
        table = np.atleast_2d(np.asarray(table, dtype=np.float64))
        layer = cls(id, input, fallback=fallback)
        layer.add_param("table", table, trainable, table.shape[1])
        return layer

    def config(self):
        return {"fallback": self.fallback.tolist()}

    def forward(self, xs, ctx):
        (idx,) = xs
        idx = np.asarray(idx, dtype=np.int64)
        table = self.p("table")
        if idx.ndim != 1:
            raise ShapeError(f"layer {self.id!r}: expected a 1-D index array, got shape {idx.shape}")
        if idx.size and idx.max() >= table.shape[0]:
            raise ShapeError(f"layer {self.id!r}: index {idx.max()} outside table of {table.shape[0]} rows")
        out = np.empty((idx.shape[0], table.shape[1]))
        seen = idx >= 0
        out[seen] = table[idx[seen]]
        out[~seen] = self.fallback
        self._cache = idx
        return out

    def backward(self, g):
        idx = self._need_cache()
        seen = idx >= 0
        np.add.at(self.params["table"].grad, idx[seen], g[seen])
        return [None]


class Select(Layer):
    kind = "select"

    def __init__(self, id, inputs, indices=(), in_width=0):
        super().__init__(id, inputs)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.in_width = int(in_width)

    def config(self):
        return {"indices": self.indices.tolist(), "in_width": self.in_width}

    def forward(self, xs, ctx):
        (x,) = xs
        self._check_width(x, self.in_width)
        self._cache = x.shape
        return x[:, self.indices]

    def backward(self, g):
        shape = self._need_cache()
        gx = np.zeros(shape)
        gx[:, self.indices] += g
        return [gx]


class Concat(Layer):
    kind = "concat"

    def forward(self, xs, ctx):
        rows = {x.shape[0] for x in xs}
        if len(rows) > 1:
            raise ShapeError(f"layer {self.id!r}: inputs disagree on batch size {sorted(rows)}")
        self._cache = [x.shape[1] for x in xs]
        return np.concatenate(xs, axis=1)

    def backward(self, g):
        widths = self._need_cache()
        cuts = np.cumsum(widths)[:-1]
        return list(np.split(g, cuts, axis=1))


class ReLU(Layer):
    kind = "relu"

    def forward(self, xs, ctx):
        (x,) = xs
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, g):
        return [g * self._need_cache()]


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, xs, ctx):
        (x,) = xs
        self._cache = expit(x)
        return self._cache

    def backward(self, g):
        s = self._need_cache()
        return [g * s * (1.0 - s)]


class Dropout(Layer):
    """Inverted dropout: active in train mode only, scaled by 1/(1-p)."""

    kind = "dropout"

    def __init__(self, id, inputs, p=0.0):
        super().__init__(id, inputs)
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.rate = float(p)

    def config(self):
        return {"p": self.rate}

    def forward(self, xs, ctx):
        (x,) = xs
        if ctx.mode != TRAIN or self.rate == 0.0:
            self._cache = None
            self._passthrough = True
            return x
        if ctx.rng is None:
            raise ValueError(f"layer {self.id!r}: train mode needs a random generator")
        self._passthrough = False
        mask = (ctx.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, g):
        if getattr(self, "_passthrough", False):
            return [g]
        return [g * self._need_cache()]


class TreeLeaves(Layer):
    """One two-hidden-layer block per tree; outputs concatenated leaf activations.

    Decision units compute ``sigmoid(gamma1 * (x W1^T + b1))`` and leaf units
    ``sigmoid(gamma2 * (d W2^T + b2))``. Hard mode replaces both sigmoids by
    the strict unit step. Trees with a single leaf contribute a constant 1.
    """

    kind = "tree_leaves"

    def __init__(self, id, inputs, gamma1=100.0, gamma2=10.0, in_width=0, shapes=()):
        super().__init__(id, inputs)
        self.gamma1 = float(gamma1)
        self.gamma2 = float(gamma2)
        self.in_width = int(in_width)
        self.shapes = [tuple(s) for s in shapes]  # (internal, leaves) per tree

    def config(self):
        return {"gamma1": self.gamma1, "gamma2": self.gamma2, "in_width": self.in_width,
                "shapes": [list(s) for s in self.shapes]}

    @property
    def n_leaves(self) -> int:
        return sum(s[1] for s in self.shapes)

    def add_block(self, W1, b1, W2, b2):
        k = len(self.shapes)
        n_int, n_leaf = W2.shape[1], W2.shape[0]
        self.shapes.append((n_int, n_leaf))
        if n_int == 0:
            return
        self.add_param(f"t{k}.W1", W1, True, self.in_width)
        self.add_param(f"t{k}.b1", b1, True, self.in_width)
        self.add_param(f"t{k}.W2", W2, True, n_int)
        self.add_param(f"t{k}.b2", b2, True, n_int)

    def forward(self, xs, ctx):
        (x,) = xs
        self._check_width(x, self.in_width)
        hard = ctx.mode == HARD
        outs, cache = [], []
        for k, (n_int, _) in enumerate(self.shapes):
            if n_int == 0:
                outs.append(np.ones((x.shape[0], 1)))
                cache.append(None)
                continue
            z1 = x @ self.p(f"t{k}.W1").T + self.p(f"t{k}.b1")
            d = (z1 > 0).astype(np.float64) if hard else expit(self.gamma1 * z1)
            z2 = d @ self.p(f"t{k}.W2").T + self.p(f"t{k}.b2")
            leaf = (z2 > 0).astype(np.float64) if hard else expit(self.gamma2 * z2)
            outs.append(leaf)
            cache.append((d, leaf))
        self._cache = None if hard else (x, cache)
        return np.concatenate(outs, axis=1) if outs else np.zeros((x.shape[0], 0))

    def backward(self, g):
        x, cache = self._need_cache()
        gx = np.zeros_like(x)
        start = 0
        for k, (n_int, n_leaf) in enumerate(self.shapes):
            gl = g[:, start:start + n_leaf]
            start += n_leaf
            if n_int == 0:
                continue
            d, leaf = cache[k]
            gz2 = gl * self.gamma2 * leaf * (1.0 - leaf)
            self.params[f"t{k}.W2"].grad += gz2.T @ d
            self.params[f"t{k}.b2"].grad += gz2.sum(axis=0)
            gz1 = (gz2 @ self.p(f"t{k}.W2")) * self.gamma1 * d * (1.0 - d)
            self.params[f"t{k}.W1"].grad += gz1.T @ x
            self.params[f"t{k}.b1"].grad += gz1.sum(axis=0)
            gx += gz1 @ self.p(f"t{k}.W1")
        return [gx]


class TreeSum(Layer):
    """Output layer of the tree blocks: ``base + sum_k leaves_k . w3_k``."""

    kind = "tree_sum"

    def __init__(self, id, inputs, leaf_counts=()):
        super().__init__(id, inputs)
        self.leaf_counts = [int(c) for c in leaf_counts]

    def config(self):
        return {"leaf_counts": self.leaf_counts}

    @classmethod
    def build(cls, id, input, leaf_values, base_score, trainable=True):
        layer = cls(id, input, [len(v) for v in leaf_values])
        for k, v in enumerate(leaf_values):
            layer.add_param(f"t{k}.w3", v, trainable, len(v))
        layer.add_param("base", [base_score], False, 1)
        return layer

    def forward(self, xs, ctx):
        (leaves,) = xs
        self._check_width(leaves, sum(self.leaf_counts))
        out = np.full(leaves.shape[0], self.p("base")[0])
        start = 0
        for k, n in enumerate(self.leaf_counts):
            out = out + leaves[:, start:start + n] @ self.p(f"t{k}.w3")
            start += n
        self._cache = leaves
        return out[:, None]

    def backward(self, g):
        leaves = self._need_cache()
        g = g[:, 0]
        gl = np.empty_like(leaves)
        start = 0
        for k, n in enumerate(self.leaf_counts):
            block = leaves[:, start:start + n]
            self.params[f"t{k}.w3"].grad += block.T @ g
            gl[:, start:start + n] = np.outer(g, self.p(f"t{k}.w3"))
            start += n
        self.params["base"].grad += g.sum(keepdims=True)
        return [gl]


LAYER_KINDS = {cls.kind: cls for cls in
               (Dense, Scale, Embedding, Select, Concat, ReLU, Sigmoid, Dropout, TreeLeaves, TreeSum)}
