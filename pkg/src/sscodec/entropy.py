"""Quantisation, Gaussian likelihoods and the channel-spatial context model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .attention import WindowConfig, wla, wla_manifest
from .config import LAMBDAS, SIGMA_MIN, ModelConfig
from .ssm import vss_block, vss_manifest
from .tensor import ConvSpec, ShapeError, activation, conv2d, linear

PHASES = ("anchor", "nonanchor")


@dataclass
class EntropyParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ShapeError(f"mu {self.mu.shape} and sigma {self.sigma.shape} differ")


def quantize(y, mu) -> np.ndarray:
    """Mean-shifted rounding: ``round(y - mu) + mu``."""
    return quantize_residual(y, mu)[1]


def quantize_residual(y, mu) -> tuple[np.ndarray, np.ndarray]:
    """Integer residuals and the dequantised latent ``residual + mu``."""
    y = np.asarray(y, np.float32)
    mu = np.asarray(mu, np.float32)
    if y.shape != mu.shape:
        raise ShapeError(f"y {y.shape} and mu {mu.shape} differ")
    r = np.rint(y - mu)
    return r.astype(np.int64), (r + mu).astype(np.float32)


def likelihood(r, sigma, offset=0.0) -> np.ndarray:
    """Mass of N(offset, sigma^2) convolved with U(-1/2, 1/2) at integers ``r``.

    Computed from the left tail of |r - offset| so the result is symmetric and
    keeps precision far from the mean.
    """
    sigma = np.asarray(sigma, np.float64)
    if np.any(sigma < SIGMA_MIN * (1 - 1e-6)):
        raise ValueError(f"scale below the floor {SIGMA_MIN}")
    d = np.abs(np.asarray(r, np.float64) - offset)
    return ndtr((0.5 - d) / sigma) - ndtr((-0.5 - d) / sigma)


def checkerboard_mask(height: int, width: int) -> np.ndarray:
    """Boolean (H, W) map of anchor sites: ``(i + j)`` even."""
    i, j = np.indices((height, width))
    return (i + j) % 2 == 0


def checkerboard_split(x) -> tuple[np.ndarray, np.ndarray]:
    """Zero out the other phase: ``(anchors_only, nonanchors_only)``."""
    x = np.asarray(x)
    mask = checkerboard_mask(*x.shape[-2:])
    zero = np.zeros((), x.dtype)
    return np.where(mask, x, zero), np.where(mask, zero, x)


def checkerboard_merge(anchors, nonanchors) -> np.ndarray:
    anchors = np.asarray(anchors)
    mask = checkerboard_mask(*anchors.shape[-2:])
    return np.where(mask, anchors, np.asarray(nonanchors))


def context_manifest(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    c = cfg.chunk
    out = 2 * c
    shapes: dict[str, tuple[int, ...]] = {}
    for k in range(2, cfg.K + 1):
        width = (k - 1) * c
        shapes.update(vss_manifest(f"ctx.channel{k}.vss", width, cfg.state_dim))
        shapes[f"ctx.channel{k}.conv.weight"] = (out, width, 3, 3)
        shapes[f"ctx.channel{k}.conv.bias"] = (out,)
    shapes.update(vss_manifest("ctx.spatial.vss", c, cfg.state_dim))
    shapes["ctx.spatial.conv.weight"] = (out, c, 3, 3)
    shapes["ctx.spatial.conv.bias"] = (out,)

    agg_in = out + out + 2 * cfg.M
    for k in range(1, cfg.K + 1):
        for phase in PHASES:
            p = f"param.k{k}.{phase}"
            shapes[f"{p}.agg0.weight"] = (cfg.agg_width, agg_in)
            shapes[f"{p}.agg0.bias"] = (cfg.agg_width,)
            shapes[f"{p}.agg1.weight"] = (cfg.agg_width, cfg.agg_width)
            shapes[f"{p}.agg1.bias"] = (cfg.agg_width,)
            shapes.update(wla_manifest(f"{p}.wla", cfg.agg_width))
            shapes[f"{p}.out.weight"] = (out, cfg.agg_width)
            shapes[f"{p}.out.bias"] = (out,)
    shapes["hyper_prior.mean"] = (cfg.N,)
    shapes["hyper_prior.scale"] = (cfg.N,)
    return shapes


def window_config(cfg: ModelConfig) -> WindowConfig:
    return WindowConfig(cfg.window, cfg.heads, cfg.agg_width // cfg.heads)


def _context_conv(x, weights, prefix, out_channels):
    spec = ConvSpec(x.shape[1], out_channels, 3, 1, 1)
    return conv2d(x, weights[f"{prefix}.conv.weight"], weights[f"{prefix}.conv.bias"], spec)


def channel_context(previous, weights, k: int, shape: tuple[int, int]) -> np.ndarray:
    """Features of already-coded chunks ``1..k-1`` for chunk ``k``.

    ``previous`` is their channel concatenation (ignored for ``k == 1``, whose
    context is empty and therefore all zeros). ``shape`` is the latent grid.
    """
    cfg = weights.config
    if not 1 <= k <= cfg.K:
        raise ValueError(f"chunk index {k} outside 1..{cfg.K}")
    out = 2 * cfg.chunk
    if k == 1:
        return np.zeros((1, out, *shape), np.float32)
    previous = np.asarray(previous, np.float32)
    if previous.shape[1] != (k - 1) * cfg.chunk:
        raise ShapeError(
            f"chunk {k} needs {k - 1} previous chunks ({(k - 1) * cfg.chunk} channels), "
            f"got {previous.shape[1]}"
        )
    h = vss_block(previous, weights, f"ctx.channel{k}.vss")
    return _context_conv(h, weights, f"ctx.channel{k}", out)


def spatial_context(anchor_masked, weights) -> np.ndarray:
    """Features of the current chunk's anchors (all zeros during the anchor phase)."""
    cfg = weights.config
    anchor_masked = np.asarray(anchor_masked, np.float32)
    if anchor_masked.shape[1] != cfg.chunk:
        raise ShapeError(f"spatial context expects {cfg.chunk} channels, got {anchor_masked.shape[1]}")
    h = vss_block(anchor_masked, weights, "ctx.spatial.vss")
    return _context_conv(h, weights, "ctx.spatial", 2 * cfg.chunk)


def estimate_params(f_channel, f_spatial, hyper, weights, k: int, phase: str) -> EntropyParams:
    """Aggregate channel, spatial and hyper features, refine with WLA, emit (mu, sigma)."""
    cfg = weights.config
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    feats = np.concatenate([f_channel, f_spatial, hyper], axis=1).astype(np.float32)
    expected = 4 * cfg.chunk + 2 * cfg.M
    if feats.shape[1] != expected:
        raise ShapeError(f"aggregation expects {expected} channels, got {feats.shape[1]}")
    p = f"param.k{k}.{phase}"
    h = activation(linear(feats, weights[f"{p}.agg0.weight"], weights[f"{p}.agg0.bias"]), "gelu")
    h = linear(h, weights[f"{p}.agg1.weight"], weights[f"{p}.agg1.bias"])
    h = wla(h, weights, f"{p}.wla", window_config(cfg))
    out = linear(h, weights[f"{p}.out.weight"], weights[f"{p}.out.bias"])
    mu, raw = out[:, : cfg.chunk], out[:, cfg.chunk :]
    sigma = np.maximum(activation(raw, "softplus"), np.float32(SIGMA_MIN))
    return EntropyParams(np.ascontiguousarray(mu), sigma.astype(np.float32))


def hyper_prior(weights) -> EntropyParams:
    """Per-channel (mu, sigma) of the quantised hyper latent, shape (N,)."""
    mean = np.asarray(weights["hyper_prior.mean"], np.float32)
    scale = np.maximum(np.asarray(weights["hyper_prior.scale"], np.float32), np.float32(SIGMA_MIN))
    return EntropyParams(mean, scale)


class ContextModel:
    """Walks the chunk/phase schedule, caching what both coder ends share.

    Encoder and decoder drive the same object with the same dequantised
    latents, so the parameters they see are computed by identical calls.
    """

    def __init__(self, weights, hyper: np.ndarray):
        self.weights = weights
        self.cfg = weights.config
        self.hyper = np.asarray(hyper, np.float32)
        self.shape = self.hyper.shape[2:]
        self.coded: list[np.ndarray] = []
        self._zero_spatial = None
        self._f_channel = None

    @property
    def next_chunk(self) -> int:
        return len(self.coded) + 1

    def anchor_params(self) -> EntropyParams:
        k = self.next_chunk
        prev = np.concatenate(self.coded, axis=1) if self.coded else None
        self._f_channel = channel_context(prev, self.weights, k, self.shape)
        if self._zero_spatial is None:
            zeros = np.zeros((1, self.cfg.chunk, *self.shape), np.float32)
            self._zero_spatial = spatial_context(zeros, self.weights)
        return estimate_params(self._f_channel, self._zero_spatial, self.hyper, self.weights, k, "anchor")

    def nonanchor_params(self, anchors_hat) -> EntropyParams:
        k = self.next_chunk
        masked, _ = checkerboard_split(np.asarray(anchors_hat, np.float32))
        f_spatial = spatial_context(masked, self.weights)
        return estimate_params(self._f_channel, f_spatial, self.hyper, self.weights, k, "nonanchor")

    def push(self, chunk_hat) -> None:
        self.coded.append(np.asarray(chunk_hat, np.float32))
        self._f_channel = None


def rd_loss(x, x_hat, y_likelihoods, z_likelihoods, lmbda: float):
    """``lmbda * 255^2 * MSE + bpp_y + bpp_z``; returns (loss, mse, bpp_y, bpp_z)."""
    if not any(np.isclose(lmbda, l) for l in LAMBDAS):
        warnings.warn(f"lambda {lmbda} is not one of the trained operating points {LAMBDAS}")
    x = np.asarray(x, np.float64)
    x_hat = np.asarray(x_hat, np.float64)
    pixels = x.shape[-2] * x.shape[-1]
    mse = float(np.mean((x - x_hat) ** 2))
    bpp_y = float(-np.sum(np.log2(np.asarray(y_likelihoods, np.float64)))) / pixels
    bpp_z = float(-np.sum(np.log2(np.asarray(z_likelihoods, np.float64)))) / pixels
    return lmbda * 255.0**2 * mse + bpp_y + bpp_z, mse, bpp_y, bpp_z


def schedule_params(y_hat, hyper, weights) -> list[tuple[EntropyParams, EntropyParams]]:
    """(anchor, non-anchor) parameters of every chunk given a full ``y_hat``.

    This is what the coder computes step by step; feeding it a complete
    latent makes causality easy to probe.
    """
    cfg = weights.config
    y_hat = np.asarray(y_hat, np.float32)
    ctx = ContextModel(weights, hyper)
    out = []
    for k in range(cfg.K):
        chunk = y_hat[:, k * cfg.chunk : (k + 1) * cfg.chunk]
        anchor = ctx.anchor_params()
        nonanchor = ctx.nonanchor_params(chunk)
        out.append((anchor, nonanchor))
        ctx.push(chunk)
    return out
