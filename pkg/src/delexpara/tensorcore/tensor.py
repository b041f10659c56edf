"""Reverse-mode autodiff over numpy arrays.

Each op builds a node holding its output value, its parents and a closure
that pushes the output gradient back into the parents. ``backward`` walks
the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
NEG_INF = -1e9

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class UsageError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, used sparingly by the model code
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = g.astype(t.data.dtype, copy=False)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tracked tensor upstream of ``loss``."""
    if not loss.requires_grad or (loss._backward is None and not loss._parents):
        raise UsageError("backward() called on a tensor that is not part of a tracked graph")
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    # interior nodes start from a clean slate; leaves accumulate
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        _accum(a, g * c)

    return _result(a.data * np.asarray(c, dtype=a.dtype), (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _result(a.data * mask, (a,), bw)


def tensor_sum(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.broadcast_to(g, a.shape))

    return _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,), bw)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not training or rate <= 0.0:
        return a
    if rng is None:
        raise UsageError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / np.asarray(1.0 - rate, dtype=a.dtype)

    def bw(g):
        _accum(a, g * keep)

    return _result(a.data * keep, (a,), bw)


def masked_fill(a: Tensor, mask: np.ndarray, value: float = NEG_INF) -> Tensor:
    """Replace entries where ``mask`` is True by a constant (no gradient there)."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, np.asarray(value, dtype=a.dtype), a.data)

    def bw(g):
        _accum(a, np.where(mask, 0.0, g))

    return _result(out, (a,), bw)


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    def bw(g):
        _accum(a, g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), bw)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(a, g.transpose(inv))

    return _result(a.data.transpose(axes), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].data.ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * ndim
            idx[ax] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes follow numpy rules."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _result(out, (a, b), bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: ids out of range for table {table.shape}")

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accum(table, gt)

    return _result(table.data[ids], (table,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply elementwise gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: input {x.shape} vs gain {gain.shape} / bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        _accum(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            _accum(x, gx)

    return _result((xhat * gain.data + bias.data).astype(x.dtype), (x, gain, bias), bw)


def _softmax_np(z: np.ndarray, axis: int) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _softmax_np(x.data, axis)

    def bw(g):
        _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (x,), bw)


def masked_softmax(x: Tensor, keep: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax where entries with ``keep == False`` get probability 0."""
    return softmax(masked_fill(x, ~np.asarray(keep, dtype=bool)), axis=axis)


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted mean of -log softmax(logits)[target] over the last axis.

    ``weights`` of 0 exclude a position (padding).
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    if weights is None:
        weights = np.ones(targets.shape, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype)
    total = weights.sum()
    if total <= 0:
        raise UsageError("cross_entropy: no positions carry weight")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * weights).sum() / total

    def bw(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None],
                          np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        _accum(logits, p * (weights / total)[..., None] * g)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), bw)


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------- pooling / conv

def mean_pool(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]

    def bw(g):
        _accum(x, np.broadcast_to(np.expand_dims(g, axis) / n, x.shape))

    return _result(x.data.mean(axis=axis), (x,), bw)


def max_pool(x: Tensor, axis: int) -> Tensor:
    """Max over ``axis``; ties send the gradient to the first maximiser."""
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        _accum(x, gx)

    return _result(np.squeeze(out, axis=axis), (x,), bw)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-length 1-D convolution over axis -2.

    x: [..., L, Cin]; weight: [K, Cin, Cout] with odd K; bias: [Cout].
    Positions beyond the sequence are zero.
    """
    k, cin, cout = weight.shape
    if k % 2 != 1 or x.shape[-1] != cin or bias.shape != (cout,):
        raise ShapeError(f"conv1d: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    half = k // 2
    length = x.shape[-2]
    pad = [(0, 0)] * (x.data.ndim - 2) + [(half, half), (0, 0)]
    xp = np.pad(x.data, pad)
    out = bias.data + sum(xp[..., j:j + length, :] @ weight.data[j] for j in range(k))

    def bw(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j:j + length, :] += g @ weight.data[j].T
            _accum(x, gxp[..., half:half + length, :])
        if weight.requires_grad:
            g2 = g.reshape(-1, cout)
            gw = np.stack([xp[..., j:j + length, :].reshape(-1, cin).T @ g2 for j in range(k)])
            _accum(weight, gw)
        _accum(bias, g.reshape(-1, cout).sum(axis=0))

    return _result(out.astype(x.dtype), (x, weight, bias), bw)


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    return float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum())
                             for p in params if p.grad is not None)))
