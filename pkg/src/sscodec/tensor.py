"""Dense (batch, channel, height, width) float32 kernels.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 in NCHW order.
Reductions accumulate in float64 and the result is cast back to float32, so
repeated evaluation on the same inputs is bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

LN_EPS = 1e-6


class ShapeError(ValueError):
    """Raised when tensor or weight extents do not fit together."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    transposed: bool = False
    depthwise: bool = False
    output_padding: int = 0

    def __post_init__(self):
        if self.depthwise and self.in_channels != self.out_channels:
            raise ShapeError(
                f"depthwise conv needs in_channels == out_channels, "
                f"got {self.in_channels} and {self.out_channels}"
            )

    @property
    def weight_shape(self) -> tuple[int, ...]:
        k = self.kernel_size
        if self.depthwise:
            return (self.out_channels, 1, k, k)
        if self.transposed:
            return (self.in_channels, self.out_channels, k, k)
        return (self.out_channels, self.in_channels, k, k)

    def output_size(self, size: int) -> int:
        k, s, p = self.kernel_size, self.stride, self.padding
        if self.transposed:
            return (size - 1) * s - 2 * p + k + self.output_padding
        return (size + 2 * p - k) // s + 1


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a contiguous float32 NCHW array."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-axis (N, C, H, W) tensor, got shape {x.shape}")
    return x


def _check_input(x: np.ndarray, w: np.ndarray, spec: ConvSpec) -> None:
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"channel axis: input has {x.shape[1]} channels, spec expects {spec.in_channels}"
        )
    if tuple(w.shape) != spec.weight_shape:
        raise ShapeError(f"weight axes: got {tuple(w.shape)}, expected {spec.weight_shape}")


def conv2d(x, w, b, spec: ConvSpec) -> np.ndarray:
    """Zero-padded strided 2-D cross-correlation."""
    x = as_tensor(x)
    if spec.depthwise:
        out = depthwise_conv2d(x, w, spec)
        if b is not None:
            out = (out + np.asarray(b, np.float32).reshape(1, -1, 1, 1)).astype(np.float32)
        return out
    _check_input(x, w, spec)
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    n, c, h, wd = x.shape
    ho, wo = spec.output_size(h), spec.output_size(wd)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"spatial axes: input {h}x{wd} too small for kernel {k}")
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (p, p), (p, p)))
    # (n, c, ho', wo', k, k) -> strided selection -> (n, ho, wo, c, k, k)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = np.asarray(w, np.float64).reshape(spec.out_channels, c * k * k)
    out = cols @ wmat.T
    if b is not None:
        out += np.asarray(b, np.float64)
    out = out.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out, dtype=np.float32)


def conv_transpose2d(x, w, b, spec: ConvSpec) -> np.ndarray:
    """Adjoint of :func:`conv2d` with respect to its input (plus bias)."""
    x = as_tensor(x)
    _check_input(x, w, spec)
    if not spec.transposed:
        raise ShapeError("conv_transpose2d needs a spec with transposed=True")
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    n, c, h, wd = x.shape
    ho, wo = spec.output_size(h), spec.output_size(wd)
    co = spec.out_channels
    wmat = np.asarray(w, np.float64).reshape(c, co * k * k)
    # per input site: contribution to a k x k patch of every output channel
    cols = x.astype(np.float64).transpose(0, 2, 3, 1).reshape(n * h * wd, c) @ wmat
    cols = cols.reshape(n, h, wd, co, k, k)
    full_h = (h - 1) * s + k
    full_w = (wd - 1) * s + k
    full = np.zeros((n, co, max(full_h, ho + p), max(full_w, wo + p)))
    for i in range(k):
        for j in range(k):
            full[:, :, i : i + (h - 1) * s + 1 : s, j : j + (wd - 1) * s + 1 : s] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    out = full[:, :, p : p + ho, p : p + wo]
    if b is not None:
        out = out + np.asarray(b, np.float64).reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out, dtype=np.float32)


def depthwise_conv2d(x, w, spec: ConvSpec) -> np.ndarray:
    x = as_tensor(x)
    if not spec.depthwise:
        raise ShapeError("depthwise_conv2d needs a spec with depthwise=True")
    _check_input(x, w, spec)
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    n, c, h, wd = x.shape
    ho, wo = spec.output_size(h), spec.output_size(wd)
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (p, p), (p, p)))
    w64 = np.asarray(w, np.float64)
    out = np.zeros((n, c, ho, wo))
    for i in range(k):
        for j in range(k):
            tap = xp[:, :, i : i + (ho - 1) * s + 1 : s, j : j + (wo - 1) * s + 1 : s]
            out += tap * w64[:, 0, i, j].reshape(1, c, 1, 1)
    return out.astype(np.float32)


def linear(x, w, b=None) -> np.ndarray:
    """Affine map along the channel axis at every spatial site."""
    x = as_tensor(x)
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise ShapeError(
            f"linear weight {w.shape} does not accept {x.shape[1]} input channels"
        )
    n, c, h, wd = x.shape
    flat = x.astype(np.float64).transpose(0, 2, 3, 1).reshape(-1, c)
    out = flat @ w.astype(np.float64).T
    if b is not None:
        out += np.asarray(b, np.float64)
    out = out.reshape(n, h, wd, w.shape[0]).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out, dtype=np.float32)


def layer_norm(x, gain=None, bias=None, eps: float = LN_EPS) -> np.ndarray:
    """Normalise across channels independently at each site."""
    x64 = as_tensor(x).astype(np.float64)
    mean = x64.mean(axis=1, keepdims=True)
    centered = x64 - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    out = centered / np.sqrt(var + eps)
    if gain is not None:
        out = out * np.asarray(gain, np.float64).reshape(1, -1, 1, 1)
    if bias is not None:
        out = out + np.asarray(bias, np.float64).reshape(1, -1, 1, 1)
    return out.astype(np.float32)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(v) -> np.ndarray:
    v = np.asarray(v, np.float64)
    return np.logaddexp(0.0, v)


def activation(x, kind: str) -> np.ndarray:
    """Elementwise nonlinearity: ``silu``, ``gelu``, ``softplus`` or ``exp``."""
    v = np.asarray(x, np.float64)
    if kind == "silu":
        out = v * _sigmoid(v)
    elif kind == "gelu":
        out = 0.5 * v * (1.0 + erf(v / np.sqrt(2.0)))
    elif kind == "softplus":
        out = softplus(v)
    elif kind == "exp":
        out = np.exp(v)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return out.astype(np.float32)


def softmax(x, axis: int = -1) -> np.ndarray:
    v = np.asarray(x, np.float64)
    v = v - v.max(axis=axis, keepdims=True)
    e = np.exp(v)
    return e / e.sum(axis=axis, keepdims=True)
