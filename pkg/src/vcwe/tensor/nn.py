"""Network-layer ops with analytic backward rules.

Convolution is cross-correlation (no kernel flip). Pooling output sizes
use the floor convention; the default glyph network is shaped so windows
tile exactly. All ops accept and return Tensors from the autograd core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .autograd import Tensor, _make, add, matmul, matvec, mul, narrow, sigmoid, tanh


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x: [n, d_in], w: [d_in, d_out], b: [d_out]."""
    return add(matmul(x, w), b)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x with kernels and add per-channel bias.

    x is [C_in, H, W] or batched [N, C_in, H, W]; kernels are
    [C_out, C_in, kh, kw]. The output spatial size (H + 2p - kh)/stride + 1
    must be integral.
    """
    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"conv2d input must be 3- or 4-dimensional, got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    n, c_in, h, w = xd.shape
    c_out, kc, kh, kw = kernels.data.shape
    if kc != c_in:
        raise ShapeError(f"kernel channels {kc} do not match input channels {c_in}")
    if bias.data.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.data.shape} does not match {c_out} output channels")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ShapeError(
            f"non-integral conv output for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeError("conv kernel larger than padded input")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,ocij->nohw", windows, kernels.data, optimize=True)
    out += bias.data[None, :, None, None]

    def vjp(g):
        g4 = g if batched else g[None]
        d_bias = g4.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        d_kern = (np.einsum("nohw,nchwij->ocij", g4, windows, optimize=True)
                  if kernels.requires_grad else None)
        d_x = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.einsum("nohw,oc->nchw", g4, kernels.data[:, :, i, j],
                                        optimize=True)
                    dxp[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += contrib
            d_x = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
            if not batched:
                d_x = d_x[0]
        return d_x, d_kern, d_bias

    return _make(out if batched else out[0], (x, kernels, bias), vjp, "conv2d")


def maxpool2d(x: Tensor, k: int, stride: int | None = None) -> tuple[Tensor, np.ndarray]:
    """Per-window maximum; returns (pooled, argmax) where argmax holds the
    flat H*W index of each window's winner. Backward routes gradient to the
    argmax positions only; ties go to the first (row-major) position.
    """
    stride = k if stride is None else stride
    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"maxpool2d input must be 3- or 4-dimensional, got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    n, c, h, w = xd.shape
    if k > h or k > w:
        raise ShapeError(f"pool window {k} larger than input {h}x{w}")

    windows = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n_, c_, h_out, w_out = windows.shape[:4]
    flat = windows.reshape(n, c, h_out, w_out, k * k)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]

    rows = (np.arange(h_out) * stride)[None, None, :, None] + local // k
    cols = (np.arange(w_out) * stride)[None, None, None, :] + local % k
    argmax = rows * w + cols  # [n, c, h_out, w_out]

    def vjp(g):
        g4 = g if batched else g[None]
        dx = np.zeros((n, c, h * w), dtype=xd.dtype)
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dx, (np.broadcast_to(ni, argmax.shape),
                       np.broadcast_to(ci, argmax.shape), argmax), g4)
        dx = dx.reshape(n, c, h, w)
        return (dx if batched else dx[0],)

    pooled = _make(out if batched else out[0], (x,), vjp, "maxpool2d")
    return pooled, argmax if batched else argmax[0]


@dataclass
class BatchNormState:
    """Running statistics, updated in train mode and read in eval mode."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float64) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                mode: str = "train", momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over [N, C, H, W].

    Train mode normalizes with batch statistics and folds them into the
    running state; eval mode is a deterministic affine map using the
    running state.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects [N,C,H,W], got {x.data.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    xd = x.data
    c = xd.shape[1]
    axes = (0, 2, 3)
    m = xd.shape[0] * xd.shape[2] * xd.shape[3]

    if mode == "train":
        if m <= 1:
            raise ShapeError("batchnorm train mode needs more than one element per channel")
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        state.mean = (1.0 - momentum) * state.mean + momentum * mu
        state.var = (1.0 - momentum) * state.var + momentum * var * (m / (m - 1.0))
    else:
        mu = state.mean
        var = state.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def vjp(g):
        d_gamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        d_beta = g.sum(axis=axes) if beta.requires_grad else None
        d_x = None
        if x.requires_grad:
            gm = gamma.data[None, :, None, None]
            istd = inv_std[None, :, None, None]
            if mode == "train":
                dxhat = g * gm
                d_x = (istd / m) * (m * dxhat
                                    - dxhat.sum(axis=axes, keepdims=True)
                                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            else:
                d_x = g * gm * istd
        return d_x, d_gamma, d_beta

    return _make(out, (x, gamma, beta), vjp, "batchnorm2d")


@dataclass
class LstmParams:
    """Weights for one LSTM direction; gate layout along axis 0 is [i, f, g, o]."""

    w_x: Tensor  # [4h, d_in]
    w_h: Tensor  # [4h, h]
    b: Tensor    # [4h]

    @property
    def hidden(self) -> int:
        return self.w_h.data.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int,
             forget_bias: float = 1.0, dtype=np.float64) -> "LstmParams":
        w_x = xavier_uniform(rng, (4 * hidden, d_in), d_in, 4 * hidden).astype(dtype)
        w_h = xavier_uniform(rng, (4 * hidden, hidden), hidden, 4 * hidden).astype(dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = forget_bias
        return cls(Tensor(w_x, requires_grad=True), Tensor(w_h, requires_grad=True),
                   Tensor(b, requires_grad=True))


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM step: gates i,f,o = sigmoid, candidate g = tanh,
    c_t = f*c_prev + i*g, h_t = o*tanh(c_t).
    """
    h = params.hidden
    if x_t.data.shape != (params.w_x.data.shape[1],):
        raise ShapeError(f"lstm input shape {x_t.data.shape} does not match "
                         f"weight columns {params.w_x.data.shape[1]}")
    if h_prev.data.shape != (h,) or c_prev.data.shape != (h,):
        raise ShapeError("lstm state shapes do not match hidden size")
    z = add(add(matvec(params.w_x, x_t), matvec(params.w_h, h_prev)), params.b)
    i = sigmoid(narrow(z, 0, 0, h))
    f = sigmoid(narrow(z, 0, h, h))
    g = tanh(narrow(z, 0, 2 * h, h))
    o = sigmoid(narrow(z, 0, 3 * h, h))
    c_t = add(mul(f, c_prev), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t
