"""Minimal reverse-mode autodiff over float64 numpy arrays.

Values are wrapped in `Var`; operations record parents plus a vector-Jacobian
closure. `backward` walks an iteratively built topological order (graphs from
long recurrence scans get deep, so no recursion).
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import NumericsError, ShapeError


class Var:
    __slots__ = ("data", "grad", "parents", "vjp", "wants_grad")

    def __init__(self, data, parents=(), vjp=None, wants_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.wants_grad = wants_grad or any(p.wants_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, wants_grad={self.wants_grad})"


def param(data) -> Var:
    return Var(np.array(data, dtype=np.float64), wants_grad=True)


def const(data) -> Var:
    return Var(data)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _accumulate(var: Var, grad: np.ndarray):
    if not var.wants_grad:
        return
    if var.grad is None:
        # copy: `grad` may be a view into a consumer's buffer
        var.grad = np.array(grad)
    else:
        var.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(out: Var, seed=None):
    """Accumulate gradients of `out` into every reachable `wants_grad` leaf."""
    if seed is None:
        if out.data.size != 1:
            raise ShapeError("implicit backward seed needs a scalar output")
        seed = np.ones_like(out.data)
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.wants_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    out.grad = np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        if node.vjp is not None and node.grad is not None:
            node.vjp(node.grad)


def check_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {what}")


# --- arithmetic --------------------------------------------------------------

def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out_data = a.data + b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Var(out_data, (a, b), vjp)


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out_data = a.data - b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Var(out_data, (a, b), vjp)


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out_data = a.data * b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Var(out_data, (a, b), vjp)


def scale(a, k: float) -> Var:
    a = _as_var(a)

    def vjp(g):
        _accumulate(a, g * k)

    return Var(a.data * k, (a,), vjp)


def matmul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out_data = a.data @ b.data

    def vjp(g):
        if a.wants_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.wants_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return Var(out_data, (a, b), vjp)


def absolute(a) -> Var:
    a = _as_var(a)

    def vjp(g):
        # subgradient at 0 taken as 0 (np.sign(0) == 0)
        _accumulate(a, g * np.sign(a.data))

    return Var(np.abs(a.data), (a,), vjp)


def mean_all(a) -> Var:
    a = _as_var(a)
    n = a.data.size

    def vjp(g):
        _accumulate(a, np.full_like(a.data, float(g) / n))

    return Var(a.data.mean(), (a,), vjp)


# --- shape plumbing -----------------------------------------------------------

def reshape(a, shape) -> Var:
    a = _as_var(a)

    def vjp(g):
        _accumulate(a, g.reshape(a.data.shape))

    return Var(a.data.reshape(shape), (a,), vjp)


def transpose(a, axes) -> Var:
    a = _as_var(a)
    inverse = np.argsort(axes)

    def vjp(g):
        _accumulate(a, g.transpose(inverse))

    return Var(a.data.transpose(axes), (a,), vjp)


def concat(parts, axis: int) -> Var:
    parts = [_as_var(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(index)])

    return Var(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def pad_axis(a, axis: int, before: int, after: int) -> Var:
    """Zero-pad one axis; gradient is the matching slice."""
    a = _as_var(a)
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (before, after)

    def vjp(g):
        index = [slice(None)] * g.ndim
        index[axis] = slice(before, before + a.data.shape[axis])
        _accumulate(a, g[tuple(index)])

    return Var(np.pad(a.data, widths), (a,), vjp)


def slice_axis(a, axis: int, start: int, stop: int) -> Var:
    a = _as_var(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def vjp(g):
        if not a.wants_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    return Var(a.data[index], (a,), vjp)


def take_index(a, axis: int, i: int) -> Var:
    """Select one index along `axis`, dropping the axis."""
    a = _as_var(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = i
    index = tuple(index)

    def vjp(g):
        if not a.wants_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    return Var(a.data[index], (a,), vjp)


# --- activations (formulas as catalogued) -------------------------------------

def _sigmoid_data(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Var:
    a = _as_var(a)
    s = _sigmoid_data(a.data)

    def vjp(g):
        _accumulate(a, g * s * (1.0 - s))

    return Var(s, (a,), vjp)


def swish(a) -> Var:
    a = _as_var(a)
    s = _sigmoid_data(a.data)
    out = a.data * s

    def vjp(g):
        _accumulate(a, g * (s + a.data * s * (1.0 - s)))

    return Var(out, (a,), vjp)


def relu(a) -> Var:
    a = _as_var(a)

    def vjp(g):
        _accumulate(a, g * (a.data > 0))

    return Var(np.maximum(a.data, 0.0), (a,), vjp)


def leaky_relu(a, slope: float = 1e-2) -> Var:
    a = _as_var(a)
    out = np.where(a.data > 0, a.data, slope * a.data)

    def vjp(g):
        _accumulate(a, g * np.where(a.data > 0, 1.0, np.where(a.data < 0, slope, 0.0)))

    return Var(out, (a,), vjp)


def elu(a) -> Var:
    a = _as_var(a)
    neg = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg)

    def vjp(g):
        _accumulate(a, g * np.where(a.data > 0, 1.0, neg + 1.0))

    return Var(out, (a,), vjp)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Var:
    a = _as_var(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        sech2 = 1.0 - t * t
        d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _accumulate(a, g * d)

    return Var(out, (a,), vjp)


def tanh(a) -> Var:
    a = _as_var(a)
    t = np.tanh(a.data)

    def vjp(g):
        _accumulate(a, g * (1.0 - t * t))

    return Var(t, (a,), vjp)


def softmax(a, axis: int = -1) -> Var:
    a = _as_var(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        _accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return Var(s, (a,), vjp)


# --- windowed pooling ----------------------------------------------------------

def pool1d(a, size: int, mode: str) -> Var:
    """Stride-1 temporal pooling with same zero-padding over (B, L, C).

    Average pooling divides by the full window size, so zero pads pull
    boundary values toward zero; max pooling sees the pads as zeros too.
    """
    a = _as_var(a)
    B, L, C = a.data.shape
    left = (size - 1) // 2
    right = size // 2
    xp = np.pad(a.data, ((0, 0), (left, right), (0, 0)))
    windows = np.stack([xp[:, k : k + L, :] for k in range(size)], axis=2)  # (B, L, size, C)
    if mode == "max":
        arg = windows.argmax(axis=2)
        out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]

        def vjp(g):
            gxp = np.zeros_like(xp)
            bi = np.arange(B)[:, None, None]
            ti = np.arange(L)[None, :, None] + arg
            ci = np.arange(C)[None, None, :]
            np.add.at(gxp, (bi, ti, ci), g)
            _accumulate(a, gxp[:, left : left + L, :])

    elif mode == "average":
        out = windows.mean(axis=2)

        def vjp(g):
            gxp = np.zeros_like(xp)
            for k in range(size):
                gxp[:, k : k + L, :] += g / size
            _accumulate(a, gxp[:, left : left + L, :])

    else:
        raise ShapeError(f"unknown pooling mode {mode!r}")
    return Var(out, (a,), vjp)


def relative_bias(rel, length: int) -> Var:
    """Expand a per-head offset table (H, 2L-1) into score biases (H, L, L).

    Entry (h, q, k) reads the table at offset k - q + L - 1.
    """
    rel = _as_var(rel)
    H = rel.data.shape[0]
    idx = (np.arange(length)[None, :] - np.arange(length)[:, None]) + (length - 1)
    out = rel.data[:, idx]

    def vjp(g):
        grad = np.zeros_like(rel.data)
        for h in range(H):
            np.add.at(grad[h], idx, g[h])
        _accumulate(rel, grad)

    return Var(out, (rel,), vjp)
