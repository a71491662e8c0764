"""Reverse-mode automatic differentiation on dense numpy arrays.

Each op computes its forward value eagerly, verifies it is finite, and
records a closure that maps the output gradient to the input gradients.
backward() replays those closures in reverse topological order. Arrays are
float32 by default; gradient checking runs the same graphs in float64.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class NumericError(ArithmeticError):
    pass


class ShapeError(ValueError):
    pass


CHECK_FINITE = True


def _chk(arr: np.ndarray, opname: str) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {opname}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "name")

    def __init__(self, data, parents=(), backward_fn=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name})"


def tensor(data, dtype=np.float32, name=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), name=name)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary(a: Tensor, b: Tensor, out, name, da, db) -> Tensor:
    def backward(g):
        return _unbroadcast(da(g), a.shape), _unbroadcast(db(g), b.shape)

    return Tensor(_chk(out, name), (a, b), backward, name)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data + b.data, "add", lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data - b.data, "sub", lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data * b.data, "mul",
                   lambda g: g * b.data, lambda g: g * a.data)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    return _binary(a, b, out, "div",
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)  # python scalar: never upcasts the array dtype
    return Tensor(_chk(a.data * s, "scale"), (a,), lambda g: (g * s,), "scale")


def add_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=a.data.dtype)
    return Tensor(_chk(a.data + c, "add_const"), (a,), lambda g: (g,), "add_const")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return Tensor(_chk(out, "matmul"), (a, b), backward, "matmul")


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(_chk(out, "concat"), tensors, backward, "concat")


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx)
    out = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor(_chk(out, "embedding"), (table,), backward, "embedding")


def softmax(x: Tensor) -> Tensor:
    p = kernels.softmax(x.data)

    def backward(g):
        return (kernels.softmax_grad(p, np.ascontiguousarray(g)),)

    return Tensor(_chk(p, "softmax"), (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return Tensor(_chk(out, "log_softmax"), (x,), backward, "log_softmax")


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    return Tensor(_chk(out, "log"), (x,), lambda g: (g / x.data,), "log")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return Tensor(out, (x,), lambda g: (g * (x.data > 0),), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor(_chk(out, "sigmoid"), (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor(_chk(out, "tanh"), (x,), lambda g: (g * (1 - out * out),), "tanh")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if gain.data.shape != (x.data.shape[-1],):
        raise ShapeError(f"layer_norm: gain {gain.data.shape} vs x {x.data.shape}")
    y, xhat, rstd = kernels.layer_norm(x.data, gain.data, bias.data, eps)

    def backward(g):
        gx, ggain, gbias = kernels.layer_norm_grad(xhat, rstd, gain.data, g)
        return gx, ggain, gbias

    return Tensor(_chk(y, "layer_norm"), (x, gain, bias), backward, "layer_norm")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Train-mode Bernoulli dropout with inverted scaling; identity in eval."""
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = x.data * keep
    return Tensor(out, (x,), lambda g: (g * keep,), "dropout")


def reduce_sum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return Tensor(_chk(out, "reduce_sum"), (x,), backward, "reduce_sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor(out, (x,), lambda g: (g.reshape(x.data.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    out = x.data.transpose(axes)
    inv = np.argsort(axes)
    return Tensor(out, (x,), lambda g: (g.transpose(inv),), "transpose")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return Tensor(out, (x,), backward, "slice_axis")


def minimum_const(x: Tensor, c: float) -> Tensor:
    """Elementwise min(x, c); gradient passes only where x < c."""
    out = np.minimum(x.data, c)
    return Tensor(out, (x,), lambda g: (g * (x.data < c),), "minimum_const")


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor reachable from the scalar `loss`."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + g


def grad_check(f, params: dict[str, Tensor], h: float = 1e-4,
               max_coords_per_param: int = 10,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between backward() and central finite differences.

    `f(params) -> scalar Tensor` must be deterministic; run it in float64.
    Coordinates are subsampled per parameter when arrays are large.
    """
    rng = rng or np.random.default_rng(0)
    loss = f(params)
    backward(loss)
    analytic = {k: (np.zeros_like(v.data) if v.grad is None else v.grad.copy())
                for k, v in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        coords = (np.arange(n) if n <= max_coords_per_param
                  else rng.choice(n, size=max_coords_per_param, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = float(f(params).data)
            flat[c] = orig - h
            fm = float(f(params).data)
            flat[c] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - numeric) / max(1e-3, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
