"""Selective state-space layers: ZOH discretisation, 1-D scan, SS2D, VSS block."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numba
import numpy as np

from .tensor import ConvSpec, ShapeError, activation, conv2d, layer_norm, linear, softplus

SERIES_THRESHOLD = 1e-4
SCAN_ORDERS = ("row-forward", "row-reverse", "column-forward", "column-reverse")


@dataclass
class SsmParams:
    """Parameters of one selective scan over ``D`` channels with state size ``N``.

    ``A`` holds the diagonal of the (negative real) state matrix for every
    channel, shape (D, N). ``B_proj`` and ``C_proj`` (N, D) map a token to its
    input/output state vectors; ``delta_proj`` (D, D) and ``delta_bias`` (D,)
    give the pre-softplus step size.
    """

    A: np.ndarray
    B_proj: np.ndarray
    C_proj: np.ndarray
    delta_proj: np.ndarray
    delta_bias: np.ndarray
    D_skip: np.ndarray

    def __post_init__(self):
        d, n = np.shape(self.A)
        expected = {
            "B_proj": (n, d),
            "C_proj": (n, d),
            "delta_proj": (d, d),
            "delta_bias": (d,),
            "D_skip": (d,),
        }
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise ShapeError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")
        if not np.all(np.asarray(self.A) < 0):
            raise ValueError("state matrix entries must be strictly negative")

    @property
    def channels(self) -> int:
        return np.shape(self.A)[0]

    @property
    def state_dim(self) -> int:
        return np.shape(self.A)[1]

    @classmethod
    def from_weights(cls, weights: Mapping[str, np.ndarray], prefix: str) -> "SsmParams":
        return cls(**{f: weights[f"{prefix}.{f}"] for f in cls.__dataclass_fields__})


def _zoh_factor(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z, with a Taylor branch near zero."""
    z = np.asarray(z, np.float64)
    small = np.abs(z) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def discretize(A, B, delta):
    """Zero-order-hold discretisation of a diagonal system.

    Returns ``(A_bar, B_bar)`` with ``A_bar = exp(delta*A)`` and
    ``B_bar = (delta*A)^-1 (exp(delta*A) - 1) * delta*B``; arrays broadcast.
    """
    delta = np.asarray(delta, np.float64)
    if np.any(delta <= 0):
        raise ValueError("step size delta must be positive")
    z = delta * np.asarray(A, np.float64)
    return np.exp(z), _zoh_factor(z) * delta * np.asarray(B, np.float64)


@numba.njit(cache=True, fastmath=True, error_model="numpy")
def _scan_kernel(x, delta, A, B, C, D):
    L, nd = x.shape
    ns = A.shape[1]
    y = np.empty((L, nd))
    h = np.zeros((nd, ns))
    inv_a = 1.0 / A
    for t in range(L):
        for d in range(nd):
            dt = delta[t, d]
            u = x[t, d]
            acc = 0.0
            for n in range(ns):
                z = dt * A[d, n]
                e = math.exp(z)
                # (exp(z) - 1) / z * dt == (exp(z) - 1) / A
                if abs(z) < 1e-4:
                    g = dt * (1.0 + z * 0.5 + z * z * (1.0 / 6.0))
                else:
                    g = (e - 1.0) * inv_a[d, n]
                hv = e * h[d, n] + g * B[t, n] * u
                h[d, n] = hv
                acc += C[t, n] * hv
            y[t, d] = acc + D[d] * u
    return y


def scan_core(x, delta, A, B, C, D_skip) -> np.ndarray:
    """Run the recurrence with explicit per-token step sizes and state vectors.

    ``x``, ``delta``: (L, D); ``B``, ``C``: (L, N); ``A``: (D, N); ``D_skip``: (D,).
    """
    f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("step size delta must be positive")
    return _scan_kernel(f64(x), f64(delta), f64(A), f64(B), f64(C), f64(D_skip))


def selection(x_seq, params: SsmParams):
    """Input-dependent ``(delta, B, C)`` for every token of ``x_seq`` (L, D)."""
    x = np.asarray(x_seq, np.float64)
    pre = x @ np.asarray(params.delta_proj, np.float64).T + np.asarray(params.delta_bias, np.float64)
    delta = softplus(pre)
    B = x @ np.asarray(params.B_proj, np.float64).T
    C = x @ np.asarray(params.C_proj, np.float64).T
    return delta, B, C


def selective_scan(x_seq, params: SsmParams) -> np.ndarray:
    """Causal selective scan of a (L, D) sequence; returns float64 (L, D)."""
    x = np.asarray(x_seq, np.float64)
    if x.ndim != 2 or x.shape[1] != params.channels:
        raise ShapeError(f"sequence shape {x.shape} does not match {params.channels} channels")
    if x.shape[0] == 0:
        return np.zeros_like(x)
    delta, B, C = selection(x, params)
    # softplus can underflow to exactly 0 for very negative pre-activations
    delta = np.maximum(delta, np.finfo(np.float64).tiny)
    return scan_core(x, delta, params.A, B, C, params.D_skip)


def scan_states(x_seq, params: SsmParams) -> np.ndarray:
    """Hidden states h_1..h_L of :func:`selective_scan`, shape (L, D, N)."""
    x = np.asarray(x_seq, np.float64)
    delta, B, _ = selection(x, params)
    delta = np.maximum(delta, np.finfo(np.float64).tiny)
    a_bar, b_bar = discretize(params.A[None], B[:, None, :], delta[:, :, None])
    hs = np.zeros((x.shape[0], *np.shape(params.A)))
    h = np.zeros(np.shape(params.A))
    for t in range(x.shape[0]):
        h = a_bar[t] * h + b_bar[t] * x[t][:, None]
        hs[t] = h
    return hs


def scan_core_grad(x, delta, A, B, C, D_skip, dy) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of :func:`scan_core` with (delta, B, C) as free inputs."""
    x = np.asarray(x, np.float64)
    delta = np.asarray(delta, np.float64)
    A = np.asarray(A, np.float64)
    B = np.asarray(B, np.float64)
    C = np.asarray(C, np.float64)
    D_skip = np.asarray(D_skip, np.float64)
    dy = np.asarray(dy, np.float64)
    L, nd = x.shape
    ns = A.shape[1]

    z = delta[:, :, None] * A[None]  # (L, D, N)
    a_bar = np.exp(z)
    phi = _zoh_factor(z)
    b_bar = phi * delta[:, :, None] * B[:, None, :]
    hs = np.zeros((L + 1, nd, ns))
    for t in range(L):
        hs[t + 1] = a_bar[t] * hs[t] + b_bar[t] * x[t][:, None]

    grads = {
        "x": dy * D_skip,
        "D_skip": (dy * x).sum(axis=0),
        "C": np.einsum("td,tdn->tn", dy, hs[1:]),
    }
    d_abar = np.zeros_like(a_bar)
    d_bbar = np.zeros_like(b_bar)
    g = np.zeros((nd, ns))
    for t in range(L - 1, -1, -1):
        g = dy[t][:, None] * C[t][None, :] + (a_bar[t + 1] * g if t + 1 < L else 0.0)
        d_abar[t] = g * hs[t]
        d_bbar[t] = g * x[t][:, None]
        grads["x"][t] += (g * b_bar[t]).sum(axis=1)

    small = np.abs(z) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, z)
    dphi = np.where(
        small,
        0.5 + z / 3.0 + z * z / 8.0,
        (safe * np.exp(safe) - np.expm1(safe)) / (safe * safe),
    )
    dz = d_abar * a_bar + d_bbar * delta[:, :, None] * B[:, None, :] * dphi
    grads["delta"] = (dz * A[None]).sum(axis=2) + (d_bbar * phi * B[:, None, :]).sum(axis=2)
    grads["A"] = (dz * delta[:, :, None]).sum(axis=0)
    grads["B"] = (d_bbar * phi * delta[:, :, None]).sum(axis=1)
    return grads


def selective_scan_grad(x_seq, params: SsmParams, upstream) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * selective_scan(x_seq, params))``.

    Keys: ``x``, ``A``, ``B_proj``, ``C_proj``, ``delta_proj``, ``delta_bias``, ``D_skip``.
    """
    x = np.asarray(x_seq, np.float64)
    pre = x @ np.asarray(params.delta_proj, np.float64).T + np.asarray(params.delta_bias, np.float64)
    delta, B, C = selection(x, params)
    core = scan_core_grad(x, delta, params.A, B, C, params.D_skip, upstream)
    sig = 1.0 / (1.0 + np.exp(-pre))
    d_pre = core["delta"] * sig
    dx = (
        core["x"]
        + d_pre @ np.asarray(params.delta_proj, np.float64)
        + core["B"] @ np.asarray(params.B_proj, np.float64)
        + core["C"] @ np.asarray(params.C_proj, np.float64)
    )
    return {
        "x": dx,
        "A": core["A"],
        "B_proj": core["B"].T @ x,
        "C_proj": core["C"].T @ x,
        "delta_proj": d_pre.T @ x,
        "delta_bias": d_pre.sum(axis=0),
        "D_skip": core["D_skip"],
    }


def scan_path(height: int, width: int, order: str) -> np.ndarray:
    """Flat row-major site indices in the visiting order of ``order``."""
    grid = np.arange(height * width).reshape(height, width)
    if order == "row-forward":
        return grid.reshape(-1)
    if order == "row-reverse":
        return grid.reshape(-1)[::-1].copy()
    if order == "column-forward":
        return grid.T.reshape(-1)
    if order == "column-reverse":
        return grid.T.reshape(-1)[::-1].copy()
    raise ValueError(f"unknown scan order {order!r}")


def gather_path(x: np.ndarray, path: np.ndarray) -> np.ndarray:
    """(C, H, W) featuremap -> (L, C) token sequence along ``path``."""
    c = x.shape[0]
    return x.reshape(c, -1)[:, path].T


def scatter_path(seq: np.ndarray, path: np.ndarray, height: int, width: int) -> np.ndarray:
    out = np.empty((seq.shape[1], height * width), dtype=seq.dtype)
    out[:, path] = seq.T
    return out.reshape(seq.shape[1], height, width)


def ss2d_paths(x, params: Sequence[SsmParams]) -> list[np.ndarray]:
    """Per-path SS2D outputs (each (1, D, H, W), float64) in ``SCAN_ORDERS`` order."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"ss2d expects a (1, C, H, W) featuremap, got {x.shape}")
    if len(params) != len(SCAN_ORDERS):
        raise ValueError(f"need {len(SCAN_ORDERS)} parameter sets, got {len(params)}")
    _, _, h, w = x.shape
    outs = []
    for order, p in zip(SCAN_ORDERS, params):
        path = scan_path(h, w, order)
        y = selective_scan(gather_path(x[0], path), p)
        outs.append(scatter_path(y, path, h, w)[None])
    return outs


def ss2d(x, params: Sequence[SsmParams]) -> np.ndarray:
    """Four directional scans summed back onto the grid."""
    outs = ss2d_paths(x, params)
    total = outs[0].copy()
    for o in outs[1:]:
        total += o
    return total.astype(np.float32)


def vss_block(x, weights: Mapping[str, np.ndarray], prefix: str) -> np.ndarray:
    """Residual visual state-space block.

    ``x + out(LN(SS2D(silu(dwconv(in_x(n))))) * silu(in_z(n)))`` with ``n = LN(x)``.
    """
    x = np.asarray(x, np.float32)
    wt = lambda name: weights[f"{prefix}.{name}"]
    c = x.shape[1]
    if wt("norm.gain").shape != (c,):
        raise ShapeError(f"{prefix}: block built for {wt('norm.gain').shape[0]} channels, got {c}")
    n = layer_norm(x, wt("norm.gain"), wt("norm.bias"))
    inner = wt("in_x.weight").shape[0]
    u = linear(n, wt("in_x.weight"))
    u = conv2d(u, wt("dwconv.weight"), wt("dwconv.bias"), ConvSpec(inner, inner, 3, 1, 1, depthwise=True))
    u = activation(u, "silu")
    scans = [SsmParams.from_weights(weights, f"{prefix}.scan{i}") for i in range(len(SCAN_ORDERS))]
    u = ss2d(u, scans)
    u = layer_norm(u, wt("out_norm.gain"), wt("out_norm.bias"))
    gate = activation(linear(n, wt("in_z.weight")), "silu")
    out = linear(u * gate, wt("out.weight"))
    return (x + out).astype(np.float32)


def vss_manifest(prefix: str, channels: int, state_dim: int) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes of one VSS block (inner width == channels)."""
    c, d, n = channels, channels, state_dim
    shapes = {
        f"{prefix}.norm.gain": (c,),
        f"{prefix}.norm.bias": (c,),
        f"{prefix}.in_x.weight": (d, c),
        f"{prefix}.in_z.weight": (d, c),
        f"{prefix}.dwconv.weight": (d, 1, 3, 3),
        f"{prefix}.dwconv.bias": (d,),
        f"{prefix}.out_norm.gain": (d,),
        f"{prefix}.out_norm.bias": (d,),
        f"{prefix}.out.weight": (c, d),
    }
    for i in range(len(SCAN_ORDERS)):
        s = f"{prefix}.scan{i}"
        shapes.update({
            f"{s}.A": (d, n),
            f"{s}.B_proj": (n, d),
            f"{s}.C_proj": (n, d),
            f"{s}.delta_proj": (d, d),
            f"{s}.delta_bias": (d,),
            f"{s}.D_skip": (d,),
        })
    return shapes
