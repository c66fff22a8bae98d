"""Analysis/synthesis transforms and the hyperprior transforms."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .config import ModelConfig
from .ssm import vss_block, vss_manifest
from .tensor import ConvSpec, ShapeError, activation, as_tensor, conv2d, conv_transpose2d

DOWNSAMPLE = 16
HYPER_DOWNSAMPLE = 4
PAD_MULTIPLE = DOWNSAMPLE * HYPER_DOWNSAMPLE


def _conv(in_ch, out_ch, k, stride=1):
    return ConvSpec(in_ch, out_ch, k, stride, k // 2)


def _deconv(in_ch, out_ch, k, stride=2):
    return ConvSpec(in_ch, out_ch, k, stride, k // 2, transposed=True, output_padding=stride - 1)


def analysis_specs(cfg: ModelConfig) -> list[ConvSpec]:
    widths = (3, *cfg.analysis_widths, cfg.M)
    return [_conv(widths[i], widths[i + 1], 5 if i == 0 else 3, 2) for i in range(4)]


def synthesis_specs(cfg: ModelConfig) -> list[ConvSpec]:
    widths = (cfg.M, *reversed(cfg.analysis_widths), 3)
    return [_deconv(widths[i], widths[i + 1], 5 if i == 3 else 3) for i in range(4)]


def hyper_analysis_specs(cfg: ModelConfig) -> list[ConvSpec]:
    mid = cfg.hyper_widths[0]
    return [_conv(cfg.M, mid, 3, 2), _conv(mid, cfg.N, 3, 2)]


def hyper_synthesis_specs(cfg: ModelConfig) -> list[ConvSpec]:
    mid = cfg.hyper_widths[1]
    return [_deconv(cfg.N, mid, 3), _deconv(mid, 2 * cfg.M, 3)]


def _conv_shapes(prefix: str, spec: ConvSpec) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.weight": spec.weight_shape, f"{prefix}.bias": (spec.out_channels,)}


def bottleneck_specs(channels: int) -> list[ConvSpec]:
    half = channels // 2
    return [_conv(channels, half, 1), _conv(half, half, 3), _conv(half, channels, 1)]


def bottleneck_manifest(prefix: str, channels: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for i, spec in enumerate(bottleneck_specs(channels)):
        shapes.update(_conv_shapes(f"{prefix}.conv{i}", spec))
    return shapes


def transform_manifest(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every transform parameter."""
    shapes: dict[str, tuple[int, ...]] = {}
    for i, spec in enumerate(analysis_specs(cfg)):
        shapes.update(_conv_shapes(f"g_a.conv{i}", spec))
        shapes.update(vss_manifest(f"g_a.vss{i}", spec.out_channels, cfg.state_dim))
    shapes.update(bottleneck_manifest("g_a.rb", cfg.M))

    shapes.update(bottleneck_manifest("g_s.rb", cfg.M))
    for i, spec in enumerate(synthesis_specs(cfg)):
        shapes.update(vss_manifest(f"g_s.vss{i}", spec.in_channels, cfg.state_dim))
        shapes.update(_conv_shapes(f"g_s.deconv{i}", spec))

    ha = hyper_analysis_specs(cfg)
    shapes.update(_conv_shapes("h_a.conv0", ha[0]))
    shapes.update(vss_manifest("h_a.vss", ha[0].out_channels, cfg.state_dim))
    shapes.update(_conv_shapes("h_a.conv1", ha[1]))

    hs = hyper_synthesis_specs(cfg)
    shapes.update(_conv_shapes("h_s.deconv0", hs[0]))
    shapes.update(vss_manifest("h_s.vss", hs[0].out_channels, cfg.state_dim))
    shapes.update(_conv_shapes("h_s.deconv1", hs[1]))
    return shapes


def residual_bottleneck(x, weights: Mapping[str, np.ndarray], prefix: str) -> np.ndarray:
    """``x + conv1x1(gelu(conv3x3(gelu(conv1x1(x)))))`` with a C/2 bottleneck."""
    x = as_tensor(x)
    h = x
    specs = bottleneck_specs(x.shape[1])
    for i, spec in enumerate(specs):
        h = conv2d(h, weights[f"{prefix}.conv{i}.weight"], weights[f"{prefix}.conv{i}.bias"], spec)
        if i < len(specs) - 1:
            h = activation(h, "gelu")
    return (x + h).astype(np.float32)


def _config(weights) -> ModelConfig:
    cfg = getattr(weights, "config", None)
    if cfg is None:
        raise TypeError("weights must carry a ModelConfig (use ModelWeights)")
    return cfg


def analyze(x, weights) -> np.ndarray:
    """Image in [0, 1], shape (1, 3, H, W) with H, W multiples of 64 -> latent y."""
    cfg = _config(weights)
    x = as_tensor(x)
    if x.shape[1] != 3:
        raise ShapeError(f"expected 3 colour channels, got {x.shape[1]}")
    if x.shape[2] % PAD_MULTIPLE or x.shape[3] % PAD_MULTIPLE:
        raise ShapeError(
            f"image extents {x.shape[2]}x{x.shape[3]} must be multiples of {PAD_MULTIPLE}; pad first"
        )
    h = x
    for i, spec in enumerate(analysis_specs(cfg)):
        h = conv2d(h, weights[f"g_a.conv{i}.weight"], weights[f"g_a.conv{i}.bias"], spec)
        h = vss_block(h, weights, f"g_a.vss{i}")
    return residual_bottleneck(h, weights, "g_a.rb")


def synthesize(y_hat, weights) -> np.ndarray:
    """Latent (1, M, h, w) -> reconstruction (1, 3, 16h, 16w) clamped to [0, 1]."""
    cfg = _config(weights)
    y_hat = as_tensor(y_hat)
    if y_hat.shape[1] != cfg.M:
        raise ShapeError(f"latent has {y_hat.shape[1]} channels, model expects {cfg.M}")
    h = residual_bottleneck(y_hat, weights, "g_s.rb")
    for i, spec in enumerate(synthesis_specs(cfg)):
        h = vss_block(h, weights, f"g_s.vss{i}")
        h = conv_transpose2d(h, weights[f"g_s.deconv{i}.weight"], weights[f"g_s.deconv{i}.bias"], spec)
    return np.clip(h, 0.0, 1.0).astype(np.float32)


def hyper_analyze(y, weights) -> np.ndarray:
    cfg = _config(weights)
    y = as_tensor(y)
    if y.shape[1] != cfg.M:
        raise ShapeError(f"latent has {y.shape[1]} channels, model expects {cfg.M}")
    if y.shape[2] % HYPER_DOWNSAMPLE or y.shape[3] % HYPER_DOWNSAMPLE:
        raise ShapeError(f"latent extents {y.shape[2:]} must be multiples of {HYPER_DOWNSAMPLE}")
    first, second = hyper_analysis_specs(cfg)
    h = conv2d(y, weights["h_a.conv0.weight"], weights["h_a.conv0.bias"], first)
    h = vss_block(h, weights, "h_a.vss")
    return conv2d(h, weights["h_a.conv1.weight"], weights["h_a.conv1.bias"], second)


def hyper_synthesize(z_hat, weights) -> np.ndarray:
    """Quantised hyper latent -> (1, 2M, 4h, 4w) hyper features."""
    cfg = _config(weights)
    z_hat = as_tensor(z_hat)
    if z_hat.shape[1] != cfg.N:
        raise ShapeError(f"hyper latent has {z_hat.shape[1]} channels, model expects {cfg.N}")
    first, second = hyper_synthesis_specs(cfg)
    h = conv_transpose2d(z_hat, weights["h_s.deconv0.weight"], weights["h_s.deconv0.bias"], first)
    h = vss_block(h, weights, "h_s.vss")
    return conv_transpose2d(h, weights["h_s.deconv1.weight"], weights["h_s.deconv1.bias"], second)
