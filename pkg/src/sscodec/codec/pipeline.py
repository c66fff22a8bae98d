"""Image <-> CodedImage: hyper latent first, then the chunk/checkerboard schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..entropy import ContextModel, checkerboard_mask, hyper_prior, likelihood, quantize_residual
from ..errors import TruncatedStreamError, WeightMismatchError
from ..tensor import ShapeError, as_tensor
from ..transform import DOWNSAMPLE, HYPER_DOWNSAMPLE, PAD_MULTIPLE, analyze, hyper_analyze, hyper_synthesize, synthesize
from .container import CodedImage
from .lattice import decode_residuals, encode_residuals, snap_mean, snap_scale, table_bits
from .rangecoder import RangeDecoder, RangeEncoder


def padded_size(size: int, multiple: int = PAD_MULTIPLE) -> int:
    return -(-size // multiple) * multiple


def pad_image(x, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Edge-replicate the bottom/right borders up to the next multiple."""
    x = as_tensor(x)
    h, w = x.shape[2:]
    return np.pad(x, ((0, 0), (0, 0), (0, padded_size(h, multiple) - h),
                      (0, padded_size(w, multiple) - w)), mode="edge")


def _site_order(arr: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """(1, C, H, W) -> flat array in row-major site order, channels within a site."""
    sites = arr[0].transpose(1, 2, 0)
    if mask is not None:
        sites = sites[mask]
    return sites.reshape(-1)


def _unsite(flat: np.ndarray, shape, mask: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_site_order` for a masked phase; other sites are zero."""
    _, c, h, w = shape
    grid = np.zeros((h, w, c), flat.dtype)
    grid[mask] = flat.reshape(-1, c)
    return grid.transpose(2, 0, 1)[None]


def _z_coding_params(weights, shape):
    prior = hyper_prior(weights)
    n = shape[1]
    m_int, m_frac = snap_mean(prior.mu)
    scale = snap_scale(prior.sigma)
    tile = lambda v: np.broadcast_to(v.reshape(1, n, 1, 1), shape)
    return tile(m_int), tile(m_frac), tile(scale)


def encode_z(z_hat, weights) -> tuple[bytes, float]:
    """Code the integer hyper latent; returns (substream, ideal table bits)."""
    z_hat = np.asarray(z_hat, np.float32)
    m_int, m_frac, scale = _z_coding_params(weights, z_hat.shape)
    residual = _site_order(z_hat.astype(np.int64) - m_int)
    frac, sc = _site_order(m_frac), _site_order(scale)
    enc = RangeEncoder()
    encode_residuals(enc, residual, sc, frac)
    return enc.finish(), table_bits(residual, sc, frac)


def decode_z(data: bytes, weights, shape) -> np.ndarray:
    m_int, m_frac, scale = _z_coding_params(weights, shape)
    dec = RangeDecoder(data)
    residual = decode_residuals(dec, _site_order(scale), _site_order(m_frac))
    full = np.ones(shape[2:], bool)
    return (_unsite(residual, shape, full) + m_int).astype(np.float32)


@dataclass
class EncodeResult:
    coded: CodedImage
    y: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    estimated_bits: list[float] = field(default_factory=list)
    y_likelihoods: np.ndarray | None = None
    z_likelihoods: np.ndarray | None = None

    @property
    def substream_bits(self) -> list[int]:
        return [8 * len(s) for s in self.coded.substreams]


def _phase_masks(h: int, w: int):
    anchors = checkerboard_mask(h, w)
    return anchors, ~anchors


def encode_image(x, weights, original_size: tuple[int, int] | None = None) -> EncodeResult:
    """Encode a padded image (1, 3, H, W) whose extents are multiples of 64.

    ``original_size`` is the (width, height) recorded in the header; it
    defaults to the padded extents.
    """
    cfg = weights.config
    x = as_tensor(x)
    height, width = x.shape[2:]
    if x.shape[2] % PAD_MULTIPLE or x.shape[3] % PAD_MULTIPLE:
        raise ShapeError(f"image extents {height}x{width} must be multiples of {PAD_MULTIPLE}; pad first")
    ow, oh = original_size or (width, height)
    if padded_size(ow) != width or padded_size(oh) != height:
        raise ShapeError(f"original size {ow}x{oh} does not pad to {width}x{height}")

    y = analyze(x, weights)
    z = hyper_analyze(y, weights)
    z_hat = np.rint(z).astype(np.float32)
    z_stream, z_bits = encode_z(z_hat, weights)
    prior = hyper_prior(weights)
    z_lik = likelihood(z_hat, prior.sigma.reshape(1, -1, 1, 1), offset=prior.mu.reshape(1, -1, 1, 1))

    hyper = hyper_synthesize(z_hat, weights)
    ctx = ContextModel(weights, hyper)
    h, w = y.shape[2:]
    masks = _phase_masks(h, w)
    c = cfg.chunk
    streams, bits = [z_stream], [z_bits]
    y_hat = np.zeros_like(y)
    y_lik = np.ones(y.shape)
    for k in range(cfg.K):
        y_k = y[:, k * c : (k + 1) * c]
        chunk_hat = np.zeros_like(y_k)
        for phase, mask in enumerate(masks):
            params = ctx.anchor_params() if phase == 0 else ctx.nonanchor_params(chunk_hat)
            r, q = quantize_residual(y_k, params.mu)
            chunk_hat[..., mask] = q[..., mask]
            lik = likelihood(r, params.sigma)
            y_lik[:, k * c : (k + 1) * c][..., mask] = lik[..., mask]
            residual = _site_order(r, mask)
            scale = _site_order(snap_scale(params.sigma), mask)
            enc = RangeEncoder()
            encode_residuals(enc, residual, scale)
            streams.append(enc.finish())
            bits.append(table_bits(residual, scale))
        ctx.push(chunk_hat)
        y_hat[:, k * c : (k + 1) * c] = chunk_hat

    coded = CodedImage(ow, oh, cfg.lambda_index, weights.checksum, cfg.K, streams)
    return EncodeResult(coded, y, y_hat, z_hat, bits, y_lik, z_lik)


@dataclass
class DecodeResult:
    y_hat: np.ndarray
    z_hat: np.ndarray
    chunks_decoded: int


def decode_latents(coded: CodedImage, weights, allow_partial: bool = False) -> DecodeResult:
    """Recover the quantised latents; with ``allow_partial`` only the chunks
    whose two substreams are present are decoded (the rest stay zero)."""
    cfg = weights.config
    if coded.weight_checksum != weights.checksum:
        raise WeightMismatchError(
            f"stream was coded with weights {coded.weight_checksum:016x}, "
            f"loaded weights are {weights.checksum:016x}"
        )
    if coded.num_chunks != cfg.K:
        raise WeightMismatchError(f"stream has {coded.num_chunks} chunks, model uses {cfg.K}")
    if not coded.complete and not allow_partial:
        raise TruncatedStreamError(
            f"stream holds {len(coded.substreams)} of {coded.expected_substreams} substreams"
        )
    if not coded.substreams:
        raise TruncatedStreamError("stream holds no substreams")
    height, width = padded_size(coded.height), padded_size(coded.width)
    h, w = height // DOWNSAMPLE, width // DOWNSAMPLE
    z_shape = (1, cfg.N, h // HYPER_DOWNSAMPLE, w // HYPER_DOWNSAMPLE)
    z_hat = decode_z(coded.substreams[0], weights, z_shape)

    hyper = hyper_synthesize(z_hat, weights)
    ctx = ContextModel(weights, hyper)
    masks = _phase_masks(h, w)
    c = cfg.chunk
    chunk_shape = (1, c, h, w)
    y_hat = np.zeros((1, cfg.M, h, w), np.float32)
    available = (len(coded.substreams) - 1) // 2
    for k in range(available):
        chunk_hat = np.zeros(chunk_shape, np.float32)
        for phase, mask in enumerate(masks):
            params = ctx.anchor_params() if phase == 0 else ctx.nonanchor_params(chunk_hat)
            dec = RangeDecoder(coded.substreams[1 + 2 * k + phase])
            residual = decode_residuals(dec, _site_order(snap_scale(params.sigma), mask))
            r = _unsite(residual, chunk_shape, mask).astype(np.float32)
            chunk_hat[..., mask] = (r + params.mu)[..., mask]
        ctx.push(chunk_hat)
        y_hat[:, k * c : (k + 1) * c] = chunk_hat
    return DecodeResult(y_hat, z_hat, available)


def decode_image(coded: CodedImage, weights) -> np.ndarray:
    """Full decode, cropped to the original (pre-padding) extents."""
    latents = decode_latents(coded, weights)
    x_hat = synthesize(latents.y_hat, weights)
    return np.ascontiguousarray(x_hat[:, :, : coded.height, : coded.width])
