"""Window-based local attention over NCHW featuremaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .tensor import ShapeError, softmax


@dataclass(frozen=True)
class WindowConfig:
    window: int = 8
    heads: int = 8
    head_dim: int = 32

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window size must be >= 1, got {self.window}")
        if self.heads < 1 or self.head_dim < 1:
            raise ValueError("heads and head_dim must be positive")

    @property
    def width(self) -> int:
        return self.heads * self.head_dim


def window_partition(x, w: int) -> np.ndarray:
    """(1, C, H, W) -> (num_windows, w*w, C), windows in row-major grid order."""
    x = np.asarray(x)
    n, c, h, wd = x.shape
    if h % w or wd % w:
        raise ShapeError(f"spatial extents {h}x{wd} are not divisible by window {w}")
    t = x.reshape(n, c, h // w, w, wd // w, w).transpose(0, 2, 4, 3, 5, 1)
    return np.ascontiguousarray(t.reshape(-1, w * w, c))


def window_reverse(windows, w: int, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`window_partition`."""
    windows = np.asarray(windows)
    c = windows.shape[-1]
    gh, gw = height // w, width // w
    t = windows.reshape(-1, gh, gw, w, w, c).transpose(0, 5, 1, 3, 2, 4)
    return np.ascontiguousarray(t.reshape(-1, c, height, width))


def _qkv(x: np.ndarray, weights, prefix: str, cfg: WindowConfig):
    nw, t, c = x.shape
    if c != cfg.width:
        raise ShapeError(f"attention width {cfg.width} does not match {c} channels")
    w = np.asarray(weights[f"{prefix}.qkv.weight"], np.float64)
    b = np.asarray(weights[f"{prefix}.qkv.bias"], np.float64)
    qkv = (x @ w.T + b).reshape(nw, t, 3, cfg.heads, cfg.head_dim).transpose(2, 0, 3, 1, 4)
    return qkv[0], qkv[1], qkv[2]  # each (nw, heads, t, head_dim)


def attention_weights(windows, weights: Mapping[str, np.ndarray], prefix: str,
                      cfg: WindowConfig, key_mask=None) -> np.ndarray:
    """Softmax attention maps, (num_windows, heads, T, T), float64."""
    q, k, _ = _qkv(np.asarray(windows, np.float64), weights, prefix, cfg)
    logits = q @ k.transpose(0, 1, 3, 2) / np.sqrt(cfg.head_dim)
    if key_mask is not None:
        logits = np.where(np.asarray(key_mask, bool)[:, None, None, :], logits, -np.inf)
    return softmax(logits, axis=-1)


def local_attention(windows, weights: Mapping[str, np.ndarray], prefix: str,
                    cfg: WindowConfig, key_mask=None) -> np.ndarray:
    """Multi-head scaled dot-product attention inside each window.

    ``windows`` is (num_windows, T, C). ``key_mask`` (num_windows, T) marks the
    tokens that may be attended to; masked-out tokens still produce outputs.
    """
    x = np.asarray(windows, np.float64)
    nw, t, c = x.shape
    _, _, v = _qkv(x, weights, prefix, cfg)
    attn = attention_weights(x, weights, prefix, cfg, key_mask)
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(nw, t, c)
    out = out @ np.asarray(weights[f"{prefix}.proj.weight"], np.float64).T
    out = out + np.asarray(weights[f"{prefix}.proj.bias"], np.float64)
    return out.astype(np.float32)


def wla(x, weights: Mapping[str, np.ndarray], prefix: str, cfg: WindowConfig) -> np.ndarray:
    """Partition -> local attention -> reverse; shape preserving.

    Grids that are not multiples of the window are zero-padded and the padded
    sites are excluded as keys, so border windows simply hold fewer tokens.
    """
    x = np.asarray(x, np.float32)
    _, c, h, wd = x.shape
    w = cfg.window
    ph, pw = -h % w, -wd % w
    padded = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)))
    valid = np.zeros((1, 1, h + ph, wd + pw), np.float32)
    valid[..., :h, :wd] = 1.0
    mask = window_partition(valid, w)[..., 0] > 0
    out = local_attention(window_partition(padded, w), weights, prefix, cfg, key_mask=mask)
    return window_reverse(out, w, h + ph, wd + pw)[:, :, :h, :wd].copy()


def wla_manifest(prefix: str, width: int) -> dict[str, tuple[int, ...]]:
    return {
        f"{prefix}.qkv.weight": (3 * width, width),
        f"{prefix}.qkv.bias": (3 * width,),
        f"{prefix}.proj.weight": (width, width),
        f"{prefix}.proj.bias": (width,),
    }
