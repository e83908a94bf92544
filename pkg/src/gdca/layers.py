"""Differentiable network building blocks on top of :mod:`gdca.tensor`.

Layers accept a single sample (``[C, H, W]`` / ``[features]``) or a batch
(``[N, C, H, W]`` / ``[N, features]``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Precision, Tensor, apply, reduce


@dataclass
class Conv2dParams:
    weight: Tensor  # [out_channels, in_channels, kH, kW]
    bias: Tensor  # [out_channels]
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be 4-d, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"conv bias {self.bias.shape} does not match {self.weight.shape[0]} outputs")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("stride must be positive and padding non-negative")

    @classmethod
    def create(cls, in_channels, out_channels, kernel_size, rng, stride=1, padding=None,
               precision=None, trainable=True):
        """He-normal weights, zero bias; ``padding`` defaults to "same" for stride 1."""
        if padding is None:
            padding = (kernel_size - 1) // 2
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        w = init_params(shape, "he-normal", rng, precision=precision)
        b = init_params((out_channels,), "zeros", rng, precision=precision)
        w.requires_grad = b.requires_grad = trainable
        return cls(w, b, stride, padding)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def tensors(self):
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class DenseParams:
    weight: Tensor  # [out_features, in_features]
    bias: Tensor  # [out_features]

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"dense weight {self.weight.shape} / bias {self.bias.shape} inconsistent")

    @classmethod
    def create(cls, in_features, out_features, rng, precision=None, trainable=True):
        w = init_params((out_features, in_features), "he-normal", rng, precision=precision)
        b = init_params((out_features,), "zeros", rng, precision=precision)
        w.requires_grad = b.requires_grad = trainable
        return cls(w, b)

    def tensors(self):
        return {"weight": self.weight, "bias": self.bias}


def init_params(shape, scheme, rng, precision=None, fan_in=None) -> Tensor:
    """Draw a parameter tensor.

    ``rng`` is a seed or a ``numpy.random.Generator``.  He-normal uses
    variance ``2 / fan_in`` where fan_in is ``in_channels * kH * kW`` for
    4-d shapes and ``in_features`` for 2-d shapes unless given explicitly.
    """
    shape = tuple(int(s) for s in shape)
    dtype = Precision.of(precision).dtype
    if scheme == "zeros":
        return Tensor(np.zeros(shape, dtype=dtype))
    if scheme != "he-normal":
        raise ValueError(f"unknown init scheme {scheme!r}")
    if fan_in is None:
        if len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
        elif len(shape) == 2:
            fan_in = shape[1]
        else:
            raise ShapeError(f"cannot infer fan_in for shape {shape}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    draws = gen.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return Tensor(draws.astype(dtype))


# ---------------------------------------------------------------------------
# convolution


def _as_batch(x: Tensor, ndim_single: int):
    if x.ndim == ndim_single:
        return x.data[None], True
    if x.ndim == ndim_single + 1:
        return x.data, False
    raise ShapeError(f"expected a {ndim_single}-d sample or {ndim_single + 1}-d batch, got {x.shape}")


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (N, C, Ho, Wo, kh, kw) -> (N, C*kh*kw, Ho*Wo)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)


_CHUNK = 1 << 22  # elements per block of products in the exact-order path


def _direct_order(cols, w2, bias):
    """``bias + w·x`` summed tap by tap in direct-loop order (input channel, kernel row, column).

    Products are formed in one vectorized multiply with the bias as row 0; reducing a
    C-contiguous array over its leading axis adds rows one after another, so results
    are bitwise those of the naive loop (checked against ``conv2d_reference``).
    """
    n, taps, npos = cols.shape
    o = w2.shape[0]
    out = np.empty((n, o, npos), dtype=cols.dtype)
    xt = np.ascontiguousarray(cols.transpose(1, 0, 2))[:, :, None, :]  # (taps, n, 1, npos)
    wt = np.ascontiguousarray(w2.T)[:, None, :, None]  # (taps, 1, o, 1)
    step = max(1, _CHUNK // ((taps + 1) * n * npos))
    for lo in range(0, o, step):
        hi = min(o, lo + step)
        terms = np.empty((taps + 1, n, hi - lo, npos), dtype=cols.dtype)
        terms[0] = bias[None, lo:hi, None]
        np.multiply(wt[:, :, lo:hi], xt, out=terms[1:])
        out[:, lo:hi] = np.add.reduce(terms, axis=0)
    return out


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """2-D cross-correlation with zero padding, per-channel bias.

    Double precision accumulates in direct-loop order, so it matches
    ``conv2d_reference`` bit for bit; single precision uses im2col + GEMM.
    """
    xb, single = _as_batch(x, 3)
    n, c, h, w = xb.shape
    o, ci, kh, kw = p.weight.shape
    if c != ci:
        raise ShapeError(f"conv2d expects {ci} input channels, got {c}")
    s, pad = p.stride, p.padding
    ho, wo = conv_output_size(h, kh, s, pad), conv_output_size(w, kw, s, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be {ho}x{wo} for input {h}x{w}")

    xp = np.pad(xb, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xb
    w2 = p.weight.data.reshape(o, -1)
    cols = _im2col(xp, kh, kw, s, ho, wo)
    if xp.dtype == np.float64:
        out = _direct_order(cols, w2, p.bias.data).reshape(n, o, ho, wo)
    else:
        out = (np.matmul(w2, cols) + p.bias.data[:, None]).reshape(n, o, ho, wo)
    if single:
        out = out[0]

    weight, bias = p.weight, p.bias

    def back(g):
        gb = g[None] if single else g
        g2 = gb.reshape(n, o, ho * wo)
        gx = gw = gbias = None
        if weight.requires_grad:
            gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        if bias.requires_grad:
            gbias = g2.sum(axis=(0, 2))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2).reshape(n, c, kh, kw, ho, wo)
            dxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
            gx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
            if single:
                gx = gx[0]
        return gx, gw, gbias

    return apply("conv2d", out, (x, weight, bias), back)


def conv2d_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride=1, padding=0) -> np.ndarray:
    """Direct-loop convolution of one ``[C, H, W]`` sample, for cross-checking."""
    c, h, w = x.shape
    o, _, kh, kw = weight.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    ho, wo = conv_output_size(h, kh, stride, padding), conv_output_size(w, kw, stride, padding)
    out = np.empty((o, ho, wo), dtype=x.dtype)
    for oc in range(o):
        for r in range(ho):
            for q in range(wo):
                acc = bias[oc]
                for ic in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            acc = acc + weight[oc, ic, i, j] * xp[ic, r * stride + i, q * stride + j]
                out[oc, r, q] = acc
    return out


# ---------------------------------------------------------------------------
# activations


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """``max(x, slope * x)`` for ``0 <= slope <= 1``; gradient 1 at zero."""
    pos = x.data >= 0
    k = x.dtype.type(slope)
    out = np.where(pos, x.data, x.data * k)
    return apply("leaky_relu", out, (x,), lambda g: (np.where(pos, g, g * k),))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(v.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)
    return apply("sigmoid", s, (x,), lambda g: (g * s * (1 - s),))


def log_sigmoid(x: Tensor) -> Tensor:
    """``log(sigmoid(x))`` without forming the sigmoid first."""
    v = x.data
    out = np.minimum(v, 0) - np.log1p(np.exp(-np.abs(v)))
    out = out.astype(v.dtype, copy=False)
    return apply("log_sigmoid", out, (x,), lambda g: (g * (1 - _stable_sigmoid(v)),))


# ---------------------------------------------------------------------------
# pooling, rearrangement, dense


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: ``[C, H, W] -> [C]``, ``[N, C, H, W] -> [N, C]``."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"global_avg_pool expects a 3-d or 4-d tensor, got {x.shape}")
    return reduce("mean", x, (-2, -1))


def _shuffle_array(a: np.ndarray, r: int) -> np.ndarray:
    single = a.ndim == 3
    ab = a[None] if single else a
    n, cr, h, w = ab.shape
    c = cr // (r * r)
    out = ab.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)
    return out[0] if single else out


def _unshuffle_array(a: np.ndarray, r: int) -> np.ndarray:
    single = a.ndim == 3
    ab = a[None] if single else a
    n, c, hr, wr = ab.shape
    h, w = hr // r, wr // r
    out = ab.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)
    return out[0] if single else out


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange ``[C*r*r, H, W]`` into ``[C, r*H, r*W]``.

    ``out[c, h*r + i, w*r + j] = in[c*r*r + i*r + j, h, w]``; the backward
    pass is the inverse rearrangement.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"pixel_shuffle expects a 3-d or 4-d tensor, got {x.shape}")
    if r < 1 or x.shape[-3] % (r * r):
        raise ShapeError(f"channel count {x.shape[-3]} not divisible by r^2 = {r * r}")
    out = _shuffle_array(x.data, r)
    return apply("pixel_shuffle", out, (x,), lambda g: (_unshuffle_array(g, r),))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of :func:`pixel_shuffle`."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"pixel_unshuffle expects a 3-d or 4-d tensor, got {x.shape}")
    if r < 1 or x.shape[-1] % r or x.shape[-2] % r:
        raise ShapeError(f"spatial dims {x.shape[-2:]} not divisible by {r}")
    out = _unshuffle_array(x.data, r)
    return apply("pixel_unshuffle", out, (x,), lambda g: (_shuffle_array(g, r),))


def dense(x: Tensor, p: DenseParams) -> Tensor:
    """``W x + b`` for a vector or each row of a batch."""
    xb, single = _as_batch(x, 1)
    o, i = p.weight.shape
    if xb.shape[1] != i:
        raise ShapeError(f"dense expects {i} features, got {xb.shape[1]}")
    W = p.weight.data
    out = xb @ W.T + p.bias.data
    if single:
        out = out[0]
    weight, bias = p.weight, p.bias

    def back(g):
        gb = g[None] if single else g
        gx = gb @ W if x.requires_grad else None
        if gx is not None and single:
            gx = gx[0]
        gw = gb.T @ xb if weight.requires_grad else None
        gbias = gb.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gbias

    return apply("dense", out, (x, weight, bias), back)
