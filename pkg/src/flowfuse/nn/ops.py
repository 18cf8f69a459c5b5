"""Differentiable layer kernels for the fusion network.

All ops take and return Tensors with (batch, channels, height, width)
layout and register their backward rules on the tape. Convolution follows
the cross-correlation convention with zero padding; upsampling uses the
align-corners-false convention where output coordinate i samples the input
at (i + 0.5) / 2 - 0.5.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import Tensor

__all__ = [
    "conv2d",
    "leaky_relu",
    "bilinear_upsample2x",
    "concat_channels",
    "avgpool2x",
]


def _require_nchw(x: Tensor, op: str) -> None:
    if x.data.ndim != 4:
        raise ValueError(f"{op}: expected (N, C, H, W) input, got shape {x.data.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Args:
        x: Input activations (N, Cin, H, W).
        w: Kernels (Cout, Cin, kh, kw).
        b: Bias (Cout,).
        stride: 1 or 2.
        padding: Symmetric zero padding applied to both spatial axes.

    Returns:
        (N, Cout, Hout, Wout) with Hout = (H + 2*padding - kh) // stride + 1.
    """
    _require_nchw(x, "conv2d")
    if w.data.ndim != 4:
        raise ValueError(f"conv2d: expected (Cout, Cin, kh, kw) kernel, got {w.data.shape}")
    n, cin, h, wdt = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input has {cin} channels but kernel expects {cin_w}")
    if b.data.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {b.data.shape} != ({cout},)")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    if h + 2 * padding < kh or wdt + 2 * padding < kw:
        raise ValueError(
            f"conv2d: {h}x{wdt} input with padding {padding} too small for {kh}x{kw} kernel"
        )
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wdt + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    wd = w.data

    def tap(src, ki, kj):
        return src[
            :,
            :,
            ki : ki + stride * (out_h - 1) + 1 : stride,
            kj : kj + stride * (out_w - 1) + 1 : stride,
        ]

    out = np.empty((n, cout, out_h, out_w))
    out[:] = b.data[None, :, None, None]
    for ki in range(kh):
        for kj in range(kw):
            # (Cout, Cin) x (N, Cin, OH, OW) -> (Cout, N, OH, OW)
            part = np.tensordot(wd[:, :, ki, kj], tap(xp, ki, kj), axes=([1], [1]))
            out += part.transpose(1, 0, 2, 3)

    def backward(g):
        db = g.sum(axis=(0, 2, 3))
        dw = np.empty_like(wd)
        dxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                xs = tap(xp, ki, kj)
                dw[:, :, ki, kj] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
                part = np.tensordot(wd[:, :, ki, kj], g, axes=([0], [1]))
                tap(dxp, ki, kj)[...] += part.transpose(1, 0, 2, 3)
        if padding:
            dx = dxp[:, :, padding:-padding, padding:-padding]
        else:
            dx = dxp
        return ((x, dx), (w, dw), (b, db))

    return Tensor._make(out, (x, w, b), backward)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    """Elementwise max(x, slope * x) for 0 < slope < 1."""
    gate = np.where(x.data > 0, 1.0, slope)
    return Tensor._make(x.data * gate, (x,), lambda g: ((x, g * gate),))


@lru_cache(maxsize=64)
def _upsample_matrix(n: int) -> np.ndarray:
    """(2n, n) interpolation matrix for align-corners-false 2x upsampling."""
    m = np.zeros((2 * n, n))
    for i in range(2 * n):
        src = (i + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        m[i, lo_c] += 1.0 - frac
        m[i, hi_c] += frac
    return m


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """Double both spatial dimensions with bilinear interpolation."""
    _require_nchw(x, "bilinear_upsample2x")
    n, c, h, w = x.data.shape
    rm = _upsample_matrix(h)
    cm = _upsample_matrix(w)
    # out[n,c,i,j] = sum_{y,x} rm[i,y] cm[j,x] in[n,c,y,x]
    out = np.tensordot(np.tensordot(x.data, rm, axes=([2], [1])), cm, axes=([2], [1]))

    def backward(g):
        dx = np.tensordot(np.tensordot(g, rm, axes=([2], [0])), cm, axes=([2], [0]))
        return ((x, dx),)

    return Tensor._make(out, (x,), backward)


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis; spatial dims must match."""
    if not xs:
        raise ValueError("concat_channels: empty input list")
    for t in xs:
        _require_nchw(t, "concat_channels")
    base = xs[0].data.shape
    for t in xs[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise ValueError(
                f"concat_channels: shape {t.data.shape} incompatible with {base}"
            )
    sizes = [t.data.shape[1] for t in xs]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            (t, g[:, bounds[i] : bounds[i + 1]]) for i, t in enumerate(xs)
        )

    return Tensor._make(np.concatenate([t.data for t in xs], axis=1), xs, backward)


def avgpool2x(x: Tensor) -> Tensor:
    """2x2 average pooling; spatial dims must be even."""
    _require_nchw(x, "avgpool2x")
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2x: spatial dims must be even, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        dx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0
        return ((x, dx),)

    return Tensor._make(out, (x,), backward)
