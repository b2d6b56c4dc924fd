"""The seven layer forwards, the activation table and parent combiners.

Everything operates on (batch, time, channels) values built from the autodiff
primitives, so backward passes come for free. Time length is preserved by
every layer (stride-1, same-padded convolution and pooling), which keeps
element-wise combiners well-defined anywhere in the graph.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from . import autodiff as ad
from .autodiff import Var

ACTIVATION_FNS = {
    "id": None,
    "sigmoid": ad.sigmoid,
    "swish": ad.swish,
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "elu": ad.elu,
    "gelu": ad.gelu,
    "softmax": ad.softmax,  # along the channel axis
}


def apply_activation(x: Var, name: str) -> Var:
    fn = ACTIVATION_FNS[name]
    return x if fn is None else fn(x)


def pad_channels(x: Var, target: int) -> Var:
    have = x.data.shape[-1]
    if have == target:
        return x
    if have > target:
        raise ShapeError(f"cannot shrink {have} channels to {target}")
    return ad.pad_axis(x, axis=-1, before=0, after=target - have)


def combined_channels(combiner: str, channels: list[int]) -> int:
    if len(channels) == 1:
        return channels[0]
    if combiner == "concat":
        return sum(channels)
    return max(channels)


def combine(inputs: list[Var], combiner: str) -> Var:
    """Merge parent outputs: add/mul zero-pad the narrower inputs up to the
    widest channel count, concat stacks channels. A single input passes
    through untouched."""
    if not inputs:
        raise ShapeError("combiner needs at least one input")
    base = inputs[0].data.shape[:2]
    for t in inputs[1:]:
        if t.data.shape[:2] != base:
            raise ShapeError(f"combiner inputs disagree on (batch, time): {base} vs {t.data.shape[:2]}")
    if len(inputs) == 1:
        return inputs[0]
    if combiner == "concat":
        return ad.concat(inputs, axis=-1)
    width = max(t.data.shape[-1] for t in inputs)
    padded = [pad_channels(t, width) for t in inputs]
    out = padded[0]
    for t in padded[1:]:
        out = ad.add(out, t) if combiner == "add" else ad.mul(out, t)
    return out


def _bias_like(units: int) -> np.ndarray:
    return np.zeros(units)


def _affine_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- parameter allocation -----------------------------------------------------

def init_params(kind: str, spec_params: dict, in_channels: int, time_len: int,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Allocate weights for one node; `in_channels` is the post-combiner width."""
    c = in_channels
    if kind in ("identity", "pooling", "dropout"):
        return {}
    if kind == "dense":
        u = spec_params["output_units"]
        return {"w": _affine_init(rng, (c, u), c), "b": _bias_like(u)}
    if kind == "conv1d":
        k = spec_params["kernel_size"]
        return {"w": _affine_init(rng, (k, c, c), k * c), "b": _bias_like(c)}
    if kind == "recurrence":
        u = spec_params["output_units"]
        cell = spec_params["cell"]
        gates = {"rnn": 1, "gru": 3, "lstm": 4}[cell]
        params = {
            "wx": _affine_init(rng, (c, gates * u), c),
            "wh": _affine_init(rng, (u, gates * u), u),
            "b": _bias_like(gates * u),
        }
        if cell == "lstm":
            params["b"][u : 2 * u] = 1.0  # forget gate opens at init
        return params
    if kind == "attention":
        heads = spec_params["heads"]
        head_dim = c // heads
        params = {
            "wq": _affine_init(rng, (c, c), c),
            "wk": _affine_init(rng, (c, c), c),
            "wv": _affine_init(rng, (c, c), c),
            "wo": _affine_init(rng, (c, c), c),
            "bo": _bias_like(c),
        }
        if spec_params["init_type"] == "convolution":
            # Mimic a small convolution: silence the content term and give each
            # head a sharp positional peak at one offset of a centered window.
            params["wq"] = np.zeros((c, c))
            rel = np.zeros((heads, 2 * time_len - 1))
            for h in range(heads):
                offset = h - (heads - 1) // 2
                offset = max(-(time_len - 1), min(time_len - 1, offset))
                rel[h, time_len - 1 + offset] = 8.0
            params["rel"] = rel
        else:
            params["rel"] = _affine_init(rng, (heads, 2 * time_len - 1), max(head_dim, 1))
        return params
    raise ShapeError(f"unknown layer kind {kind!r}")


# --- forwards -------------------------------------------------------------------

def dense_forward(x: Var, p: dict) -> Var:
    return ad.add(ad.matmul(x, p["w"]), p["b"])


def conv1d_forward(x: Var, p: dict, kernel_size: int) -> Var:
    """Temporal convolution, stride 1, same zero-padding, channels preserved.

    The padded length L + k - 1 always covers the kernel, so the minimum
    sliding-length requirement is met for any L >= 1.
    """
    L = x.data.shape[1]
    left = (kernel_size - 1) // 2
    right = kernel_size // 2
    xp = ad.pad_axis(x, axis=1, before=left, after=right)
    out = None
    for k in range(kernel_size):
        term = ad.matmul(ad.slice_axis(xp, 1, k, k + L), ad.take_index(p["w"], 0, k))
        out = term if out is None else ad.add(out, term)
    return ad.add(out, p["b"])


def _rnn_step(x_t: Var, h: Var, p: dict) -> Var:
    return ad.tanh(ad.add(ad.add(ad.matmul(x_t, p["wx"]), ad.matmul(h, p["wh"])), p["b"]))


def _gru_step(x_t: Var, h: Var, p: dict, u: int) -> Var:
    zx = ad.add(ad.matmul(x_t, p["wx"]), p["b"])
    zh = ad.matmul(h, p["wh"])
    r = ad.sigmoid(ad.add(ad.slice_axis(zx, 1, 0, u), ad.slice_axis(zh, 1, 0, u)))
    z = ad.sigmoid(ad.add(ad.slice_axis(zx, 1, u, 2 * u), ad.slice_axis(zh, 1, u, 2 * u)))
    n = ad.tanh(ad.add(ad.slice_axis(zx, 1, 2 * u, 3 * u), ad.mul(r, ad.slice_axis(zh, 1, 2 * u, 3 * u))))
    one_minus_z = ad.sub(ad.const(np.ones_like(z.data)), z)
    return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


def _lstm_step(x_t: Var, hc: tuple[Var, Var], p: dict, u: int) -> tuple[Var, Var]:
    h, c = hc
    z = ad.add(ad.add(ad.matmul(x_t, p["wx"]), ad.matmul(h, p["wh"])), p["b"])
    i = ad.sigmoid(ad.slice_axis(z, 1, 0, u))
    f = ad.sigmoid(ad.slice_axis(z, 1, u, 2 * u))
    g = ad.tanh(ad.slice_axis(z, 1, 2 * u, 3 * u))
    o = ad.sigmoid(ad.slice_axis(z, 1, 3 * u, 4 * u))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def recurrence_forward(x: Var, p: dict, cell: str, units: int) -> Var:
    """Scan the sequence left to right and return the full hidden sequence."""
    B, L, _ = x.data.shape
    h = ad.const(np.zeros((B, units)))
    c = ad.const(np.zeros((B, units)))
    outputs = []
    for t in range(L):
        x_t = ad.take_index(x, 1, t)
        if cell == "rnn":
            h = _rnn_step(x_t, h, p)
        elif cell == "gru":
            h = _gru_step(x_t, h, p, units)
        else:
            h, c = _lstm_step(x_t, (h, c), p, units)
        outputs.append(ad.reshape(h, (B, 1, units)))
    return ad.concat(outputs, axis=1)


def attention_forward(x: Var, p: dict, heads: int) -> Var:
    """Multi-head self-attention scored by content plus a learned relative-offset bias.

    Input channels must already be a multiple of `heads` (the compiler pads
    after the combiner).
    """
    B, L, C = x.data.shape
    if C % heads:
        raise ShapeError(f"{C} channels not divisible into {heads} heads")
    d = C // heads

    def split_heads(v: Var) -> Var:
        return ad.transpose(ad.reshape(v, (B, L, heads, d)), (0, 2, 1, 3))

    q = split_heads(ad.matmul(x, p["wq"]))
    k = split_heads(ad.matmul(x, p["wk"]))
    v = split_heads(ad.matmul(x, p["wv"]))
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    scores = ad.add(scores, ad.relative_bias(p["rel"], L))  # (H,L,L) broadcast over batch
    attn = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(attn, v)  # (B, H, L, d)
    merged = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (B, L, C))
    return ad.add(ad.matmul(merged, p["wo"]), p["bo"])


def dropout_forward(x: Var, rate: float, mode: str, rng: np.random.Generator) -> Var:
    if mode != "train":
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, ad.const(mask))


def node_forward(x: Var, kind: str, spec_params: dict, params: dict,
                 mode: str, rng: np.random.Generator) -> Var:
    if kind == "identity":
        return x
    if kind == "dense":
        return dense_forward(x, params)
    if kind == "conv1d":
        return conv1d_forward(x, params, spec_params["kernel_size"])
    if kind == "recurrence":
        return recurrence_forward(x, params, spec_params["cell"], spec_params["output_units"])
    if kind == "attention":
        return attention_forward(x, params, spec_params["heads"])
    if kind == "pooling":
        return ad.pool1d(x, spec_params["pool_size"], spec_params["pool_type"])
    if kind == "dropout":
        return dropout_forward(x, spec_params["rate"], mode, rng)
    raise ShapeError(f"unknown layer kind {kind!r}")
