"""Layers composed from autodiff primitives.

Linear maps, multi-head attention, transformer encoder/decoder stacks, a GRU
cell, and the sinusoidal positional table. Parameters live in a
ParameterStore and are addressed by dotted names, so a stack built twice
from the same seed is bit-identical and a loaded checkpoint slots straight
back in.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .params import ParameterStore

NEG_INF = -1e30


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, w)
    return y if b is None else ad.add(y, b)


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    *,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    num_heads: int,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Scaled dot-product attention with ``num_heads`` heads over 2-d inputs.

    query is (Tq, D), key/value are (Tk, D); an optional additive mask of
    shape (Tq, Tk) is applied to the attention scores before softmax.
    """
    tq, d = query.shape
    tk = key.shape[0]
    if d % num_heads != 0:
        raise ShapeError(f"multi_head_attention: hidden size {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    q = linear(query, wq, bq)
    k = linear(key, wk, bk)
    v = linear(value, wv, bv)
    q3 = ad.transpose(ad.reshape(q, (tq, num_heads, dh)), (1, 0, 2))
    k3t = ad.transpose(ad.reshape(k, (tk, num_heads, dh)), (1, 2, 0))
    v3 = ad.transpose(ad.reshape(v, (tk, num_heads, dh)), (1, 0, 2))
    scores = ad.scale(ad.matmul(q3, k3t), 1.0 / math.sqrt(dh))
    if mask is not None:
        scores = ad.add(scores, Tensor(mask))
    ctx = ad.matmul(ad.softmax(scores, axis=-1), v3)
    merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (tq, d))
    return linear(merged, wo, bo)


def gru_cell(
    x: Tensor,
    h: Tensor,
    *,
    w_xr: Tensor,
    w_hr: Tensor,
    b_r: Tensor,
    w_xz: Tensor,
    w_hz: Tensor,
    b_z: Tensor,
    w_xn: Tensor,
    b_nx: Tensor,
    w_hn: Tensor,
    b_nh: Tensor,
) -> Tensor:
    """One gated recurrent step; x is (1, Din), h is (1, D), returns (1, D)."""
    if x.ndim != 2 or h.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ShapeError(f"gru_cell: expected matching 2-d inputs, got {x.shape} and {h.shape}")
    r = ad.sigmoid(linear(x, w_xr) + linear(h, w_hr) + b_r)
    z = ad.sigmoid(linear(x, w_xz) + linear(h, w_hz) + b_z)
    n = ad.tanh(linear(x, w_xn) + b_nx + r * (linear(h, w_hn) + b_nh))
    return (1.0 - z) * n + z * h


def causal_mask(t: int) -> np.ndarray:
    """Additive (t, t) mask hiding future positions."""
    return np.triu(np.full((t, t), NEG_INF), k=1)


def sinusoidal_encoding(positions, d: int) -> np.ndarray:
    """Standard sine/cosine position table for the given positions."""
    if d % 2 != 0:
        raise ShapeError(f"sinusoidal_encoding: dimension {d} must be even")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    i2 = np.arange(0, d, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, i2 / d)
    out = np.empty((pos.shape[0], d))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


class AttentionParams:
    def __init__(self, store: ParameterStore, prefix: str, d: int):
        self.kw = dict(
            wq=store.param(f"{prefix}.wq", (d, d)),
            bq=store.param(f"{prefix}.bq", (d,), init="zeros"),
            wk=store.param(f"{prefix}.wk", (d, d)),
            bk=store.param(f"{prefix}.bk", (d,), init="zeros"),
            wv=store.param(f"{prefix}.wv", (d, d)),
            bv=store.param(f"{prefix}.bv", (d,), init="zeros"),
            wo=store.param(f"{prefix}.wo", (d, d)),
            bo=store.param(f"{prefix}.bo", (d,), init="zeros"),
        )

    def __call__(self, q, k, v, num_heads, mask=None):
        return multi_head_attention(q, k, v, num_heads=num_heads, mask=mask, **self.kw)


class FeedForwardParams:
    def __init__(self, store: ParameterStore, prefix: str, d: int, d_ff: int):
        self.w1 = store.param(f"{prefix}.w1", (d, d_ff))
        self.b1 = store.param(f"{prefix}.b1", (d_ff,), init="zeros")
        self.w2 = store.param(f"{prefix}.w2", (d_ff, d))
        self.b2 = store.param(f"{prefix}.b2", (d,), init="zeros")

    def __call__(self, x):
        return linear(ad.relu(linear(x, self.w1, self.b1)), self.w2, self.b2)


class NormParams:
    def __init__(self, store: ParameterStore, prefix: str, d: int):
        self.g = store.param(f"{prefix}.g", (d,), init="ones")
        self.b = store.param(f"{prefix}.b", (d,), init="zeros")

    def __call__(self, x):
        return ad.layernorm(x, self.g, self.b)


class TransformerEncoder:
    """Post-norm encoder stack over a (T, D) sequence."""

    def __init__(self, store: ParameterStore, prefix: str, d: int, heads: int, layers: int, d_ff: int):
        self.heads = heads
        self.blocks = []
        for i in range(layers):
            base = f"{prefix}.layer{i}"
            self.blocks.append(
                (
                    AttentionParams(store, f"{base}.attn", d),
                    NormParams(store, f"{base}.norm1", d),
                    FeedForwardParams(store, f"{base}.ff", d, d_ff),
                    NormParams(store, f"{base}.norm2", d),
                )
            )

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        for attn, norm1, ff, norm2 in self.blocks:
            x = norm1(x + attn(x, x, x, self.heads, mask))
            x = norm2(x + ff(x))
        return x


class TransformerDecoder:
    """Post-norm decoder stack with causal self-attention and cross-attention."""

    def __init__(self, store: ParameterStore, prefix: str, d: int, heads: int, layers: int, d_ff: int):
        self.heads = heads
        self.blocks = []
        for i in range(layers):
            base = f"{prefix}.layer{i}"
            self.blocks.append(
                (
                    AttentionParams(store, f"{base}.self", d),
                    NormParams(store, f"{base}.norm1", d),
                    AttentionParams(store, f"{base}.cross", d),
                    NormParams(store, f"{base}.norm2", d),
                    FeedForwardParams(store, f"{base}.ff", d, d_ff),
                    NormParams(store, f"{base}.norm3", d),
                )
            )

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        mask = causal_mask(x.shape[0])
        for self_attn, norm1, cross, norm2, ff, norm3 in self.blocks:
            x = norm1(x + self_attn(x, x, x, self.heads, mask))
            x = norm2(x + cross(x, memory, memory, self.heads))
            x = norm3(x + ff(x))
        return x


class GRUParams:
    def __init__(self, store: ParameterStore, prefix: str, d_in: int, d: int):
        self.kw = dict(
            w_xr=store.param(f"{prefix}.w_xr", (d_in, d)),
            w_hr=store.param(f"{prefix}.w_hr", (d, d)),
            b_r=store.param(f"{prefix}.b_r", (d,), init="zeros"),
            w_xz=store.param(f"{prefix}.w_xz", (d_in, d)),
            w_hz=store.param(f"{prefix}.w_hz", (d, d)),
            b_z=store.param(f"{prefix}.b_z", (d,), init="zeros"),
            w_xn=store.param(f"{prefix}.w_xn", (d_in, d)),
            b_nx=store.param(f"{prefix}.b_nx", (d,), init="zeros"),
            w_hn=store.param(f"{prefix}.w_hn", (d, d)),
            b_nh=store.param(f"{prefix}.b_nh", (d,), init="zeros"),
        )

    def __call__(self, x, h):
        return gru_cell(x, h, **self.kw)


_PRIMITIVES = {
    "matmul": ad.matmul,
    "add": ad.add,
    "softmax": ad.softmax,
    "layernorm": ad.layernorm,
    "embed": ad.embed,
    "gru_cell": gru_cell,
    "multi_head_attention": multi_head_attention,
}


def forward_primitive(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch one named primitive; unknown kinds and bad shapes raise."""
    try:
        op = _PRIMITIVES[op_kind]
    except KeyError:
        raise ShapeError(f"unknown primitive op_kind '{op_kind}'") from None
    return op(*inputs, **kwargs)
