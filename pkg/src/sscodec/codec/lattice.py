"""Quantised Gaussian CDF tables on a fixed (scale, mean-fraction) lattice.

Coding parameters are snapped to 64 log-spaced scales in [0.11, 16] and to
mean fractions in steps of 1/256, so encoder and decoder always select the
same precomputed integer table. Symbol index ``r + R_MAX`` codes residual
``r`` in [-R_MAX, R_MAX]; the last index is an escape followed by the raw
residual as 32-bit two's complement (two 16-bit uniform symbols).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from ..config import SIGMA_MIN
from .rangecoder import PRECISION, TOTAL, RangeDecoder, RangeEncoder

R_MAX = 64
NUM_SYMBOLS = 2 * R_MAX + 2
ESCAPE = NUM_SYMBOLS - 1
NUM_SCALES = 64
SIGMA_MAX = 16.0
MEAN_STEPS = 256
ESCAPE_RAW_BITS = 32

SCALES = np.exp(np.linspace(np.log(SIGMA_MIN), np.log(SIGMA_MAX), NUM_SCALES))
_LOG_MIN = np.log(SIGMA_MIN)
_LOG_STEP = (np.log(SIGMA_MAX) - np.log(SIGMA_MIN)) / (NUM_SCALES - 1)


def snap_scale(sigma) -> np.ndarray:
    """Index of the nearest lattice scale (in log space), clipped to the table."""
    s = np.maximum(np.asarray(sigma, np.float64), SIGMA_MIN)
    idx = np.rint((np.log(s) - _LOG_MIN) / _LOG_STEP)
    return np.clip(idx, 0, NUM_SCALES - 1).astype(np.int64)


def snap_mean(mu) -> tuple[np.ndarray, np.ndarray]:
    """Split a mean into ``(integer part, fraction index in 0..255)`` after snapping to 1/256."""
    q = np.rint(np.asarray(mu, np.float64) * MEAN_STEPS).astype(np.int64)
    return np.floor_divide(q, MEAN_STEPS), np.mod(q, MEAN_STEPS)


def symbol_probabilities(scale_index: int, mean_index: int = 0) -> np.ndarray:
    """Analytic mass of each in-range residual plus the escape (both tails)."""
    sigma = SCALES[scale_index]
    offset = mean_index / MEAN_STEPS
    r = np.arange(-R_MAX, R_MAX + 1, dtype=np.float64)
    d = np.abs(r - offset)
    p = np.empty(NUM_SYMBOLS)
    p[:-1] = ndtr((0.5 - d) / sigma) - ndtr((-0.5 - d) / sigma)
    lower = ndtr((-R_MAX - 0.5 - offset) / sigma)
    upper = ndtr((-(R_MAX + 0.5 - offset)) / sigma)
    p[-1] = lower + upper
    return p


def quantize_frequencies(p: np.ndarray) -> np.ndarray:
    """Integer frequencies, each >= 1, summing to exactly 2**16."""
    n = len(p)
    freq = 1 + np.floor(p * (TOTAL - n)).astype(np.int64)
    # remainder goes to the most probable symbol (lowest index on ties)
    freq[int(np.argmax(p))] += TOTAL - int(freq.sum())
    return freq


def build_cdf(scale_index: int, mean_index: int = 0) -> np.ndarray:
    """Cumulative table (length NUM_SYMBOLS + 1) for one lattice point."""
    freq = quantize_frequencies(symbol_probabilities(scale_index, mean_index))
    cum = np.zeros(NUM_SYMBOLS + 1, np.int64)
    np.cumsum(freq, out=cum[1:])
    return cum


@lru_cache(maxsize=None)
def _table_list(mean_index: int) -> tuple[list[int], ...]:
    return tuple(build_cdf(s, mean_index).tolist() for s in range(NUM_SCALES))


def cdf_tables(mean_index: int = 0) -> tuple[list[int], ...]:
    """All 64 scale tables for one mean fraction, as Python lists for the coder."""
    return _table_list(int(mean_index))


def residual_symbol(r: int) -> int:
    return r + R_MAX if -R_MAX <= r <= R_MAX else ESCAPE


def encode_residuals(enc: RangeEncoder, residuals, scale_idx, mean_idx=None) -> None:
    """Code integer residuals with per-element scale (and optional mean-fraction) indices."""
    residuals = np.asarray(residuals, np.int64).ravel().tolist()
    scale_idx = np.asarray(scale_idx, np.int64).ravel().tolist()
    if mean_idx is None:
        tables = cdf_tables(0)
        lookups = (tables[s] for s in scale_idx)
    else:
        mean_idx = np.asarray(mean_idx, np.int64).ravel().tolist()
        lookups = (cdf_tables(m)[s] for s, m in zip(scale_idx, mean_idx))
    for r, cum in zip(residuals, lookups):
        if -R_MAX <= r <= R_MAX:
            enc.encode(cum, r + R_MAX)
        else:
            enc.encode(cum, ESCAPE)
            raw = r & 0xFFFFFFFF
            enc.encode_uniform(raw >> 16)
            enc.encode_uniform(raw & 0xFFFF)


def decode_residuals(dec: RangeDecoder, scale_idx, mean_idx=None) -> np.ndarray:
    scale_flat = np.asarray(scale_idx, np.int64).ravel().tolist()
    if mean_idx is None:
        tables = cdf_tables(0)
        lookups = [tables[s] for s in scale_flat]
    else:
        mean_flat = np.asarray(mean_idx, np.int64).ravel().tolist()
        lookups = [cdf_tables(m)[s] for s, m in zip(scale_flat, mean_flat)]
    out = []
    for cum in lookups:
        sym = dec.decode(cum)
        if sym == ESCAPE:
            raw = (dec.decode_uniform() << 16) | dec.decode_uniform()
            out.append(raw - (1 << 32) if raw & 0x80000000 else raw)
        else:
            out.append(sym - R_MAX)
    return np.asarray(out, np.int64).reshape(np.shape(scale_idx))


def table_bits(residuals, scale_idx, mean_idx=None) -> float:
    """Ideal code length in bits under the quantised tables, escapes included."""
    residuals = np.asarray(residuals, np.int64).ravel()
    scale_idx = np.asarray(scale_idx, np.int64).ravel()
    mean_idx = np.zeros_like(scale_idx) if mean_idx is None else np.asarray(mean_idx, np.int64).ravel()
    syms = np.where(np.abs(residuals) <= R_MAX, residuals + R_MAX, ESCAPE)
    freq = np.empty(len(syms), np.int64)
    for m in np.unique(mean_idx):
        sel = mean_idx == m
        cum = np.asarray(cdf_tables(int(m)))
        freq[sel] = cum[scale_idx[sel], syms[sel] + 1] - cum[scale_idx[sel], syms[sel]]
    escapes = int(np.count_nonzero(syms == ESCAPE))
    return float(np.sum(PRECISION - np.log2(freq))) + ESCAPE_RAW_BITS * escapes
