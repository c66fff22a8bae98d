"""Fast built-in checks: coder, lattice, scan, causality and a full round trip.

Every check is weight-agnostic: it verifies internal consistency of whatever
weights it is handed, so a valid but different weight file still passes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import WindowConfig, local_attention, window_partition, window_reverse, wla, wla_manifest
from .codec.container import CodedImage
from .codec.lattice import MEAN_STEPS, NUM_SCALES, cdf_tables, symbol_probabilities
from .codec.pipeline import decode_latents, encode_image
from .codec.rangecoder import TOTAL, rc_decode, rc_encode
from .config import ModelConfig
from .entropy import checkerboard_mask, schedule_params
from .ssm import SCAN_ORDERS, SsmParams, discretize, scan_path, ss2d_paths
from .transform import hyper_synthesize, synthesize
from .weights import ModelWeights, init_weights


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name:<20} {self.detail} ({self.seconds:.2f}s)"


def synthetic_image(size: int = 128, seed: int = 0) -> np.ndarray:
    """Smooth gradients, a few edges and mild noise, values in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    r = 0.5 + 0.4 * np.sin(2 * np.pi * xx * 1.5)
    g = 0.3 + 0.5 * yy
    b = 0.5 + 0.3 * np.cos(2 * np.pi * (xx + yy))
    img = np.stack([r, g, b])
    img[:, size // 4 : size // 2, size // 3 : 2 * size // 3] = 0.9
    img += rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0, 1).astype(np.float32)[None]


def _check_lattice(weights, rng):
    worst = 0.0
    for m in range(MEAN_STEPS):
        tables = np.asarray(cdf_tables(m))
        if np.any(np.diff(tables, axis=1) <= 0) or np.any(tables[:, -1] != TOTAL):
            return False, f"table for mean step {m} is not a strictly increasing CDF"
    for s in range(NUM_SCALES):
        for m in (0, 1, MEAN_STEPS // 2, MEAN_STEPS - 1):
            worst = max(worst, abs(symbol_probabilities(s, m).sum() - 1.0))
    return worst < 1e-6, f"{NUM_SCALES * MEAN_STEPS} tables ok, max |sum p - 1| = {worst:.1e}"


def _check_range_coder(weights, rng):
    n = 5000
    scales = rng.integers(0, NUM_SCALES, n)
    cdfs = [cdf_tables(0)[s] for s in scales]
    symbols = [int(rng.integers(0, 130)) if i % 97 == 0 else 64 + int(rng.integers(-2, 3)) for i in range(n)]
    data = rc_encode(symbols, cdfs)
    ok = rc_decode(data, cdfs) == symbols
    return ok, f"{n} symbols in {len(data)} bytes"


def _naive_scan(x, params: SsmParams):
    """Direct recurrence, one token and one channel at a time."""
    x = np.asarray(x, np.float64)
    delta = np.log1p(np.exp(x @ params.delta_proj.T.astype(np.float64) + params.delta_bias))
    B = x @ params.B_proj.T.astype(np.float64)
    C = x @ params.C_proj.T.astype(np.float64)
    y = np.zeros_like(x)
    for d in range(x.shape[1]):
        h = np.zeros(params.state_dim)
        for t in range(x.shape[0]):
            a_bar, b_bar = discretize(params.A[d], B[t], delta[t, d])
            h = a_bar * h + b_bar * x[t, d]
            y[t, d] = C[t] @ h + params.D_skip[d] * x[t, d]
    return y


def _scan_params(weights, prefix="g_a.vss0"):
    return [SsmParams.from_weights(weights, f"{prefix}.scan{i}") for i in range(len(SCAN_ORDERS))]


def _check_scan(weights, rng):
    params = _scan_params(weights)
    c = params[0].channels
    x = rng.normal(size=(1, c, 1, 12)).astype(np.float32)
    got = ss2d_paths(x, params)[0][0, :, 0].T
    want = _naive_scan(x[0, :, 0].T, params[0])
    err = float(np.max(np.abs(got - want)) / max(1.0, np.max(np.abs(want))))
    return err < 1e-5, f"row scan vs naive recurrence, max rel err {err:.1e}"


def _check_scan_causality(weights, rng):
    params = _scan_params(weights)
    c = params[0].channels
    h, w = 5, 6
    x = rng.normal(size=(1, c, h, w)).astype(np.float32)
    base = ss2d_paths(x, params)
    for _ in range(3):
        i, j = int(rng.integers(h)), int(rng.integers(w))
        x2 = x.copy()
        x2[0, :, i, j] += 1.0
        pert = ss2d_paths(x2, params)
        for order, a, b in zip(SCAN_ORDERS, base, pert):
            path = scan_path(h, w, order)
            t = int(np.nonzero(path == i * w + j)[0][0])
            before = path[:t]
            if not np.array_equal(a[0].reshape(c, -1)[:, before], b[0].reshape(c, -1)[:, before]):
                return False, f"{order}: output before site ({i},{j}) moved"
    return True, "4 paths, earlier outputs bit-identical under perturbation"


def _latent_grid(weights, rng, h=8, w=8):
    cfg = weights.config
    hyper = rng.normal(size=(1, 2 * cfg.M, h, w)).astype(np.float32)
    y_hat = np.rint(rng.normal(scale=2.0, size=(1, cfg.M, h, w))).astype(np.float32)
    return hyper, y_hat


def _same(p, q) -> bool:
    return np.array_equal(p.mu, q.mu) and np.array_equal(p.sigma, q.sigma)


def _check_context_causality(weights, rng):
    cfg = weights.config
    hyper, y_hat = _latent_grid(weights, rng)
    base = schedule_params(y_hat, hyper, weights)
    k = int(rng.integers(cfg.K))
    later = y_hat.copy()
    later[:, (k + 1) * cfg.chunk :] += 3.0
    later[:, k * cfg.chunk : (k + 1) * cfg.chunk][..., ~checkerboard_mask(*y_hat.shape[2:])] += 3.0
    pert = schedule_params(later, hyper, weights)
    channel_ok = _same(base[k][0], pert[k][0]) and _same(base[k][1], pert[k][1])
    own = y_hat.copy()
    own[:, k * cfg.chunk : (k + 1) * cfg.chunk] -= 2.0
    channel_ok &= _same(base[k][0], schedule_params(own, hyper, weights)[k][0])

    nonanchor = ~checkerboard_mask(*y_hat.shape[2:])
    shuffled = y_hat.copy()
    shuffled[..., nonanchor] = rng.normal(size=shuffled[..., nonanchor].shape).astype(np.float32)
    pert = schedule_params(shuffled, hyper, weights)
    board_ok = all(_same(base[j][0], pert[j][0]) for j in range(k + 1)) and _same(base[0][1], pert[0][1])
    return channel_ok and board_ok, f"chunk {k + 1}: channel probe {channel_ok}, checkerboard probe {board_ok}"


def _check_wla(weights, rng):
    cfg = WindowConfig(window=4, heads=2, head_dim=4)
    x = rng.normal(size=(1, cfg.width, 8, 12)).astype(np.float32)
    parts = window_partition(x, cfg.window)
    if not np.array_equal(window_reverse(parts, cfg.window, 8, 12), x):
        return False, "partition/reverse is not a bijection"
    params = {k: rng.normal(scale=0.3, size=s).astype(np.float32) for k, s in wla_manifest("w", cfg.width).items()}
    base = wla(x, params, "w", cfg)
    x2 = x.copy()
    x2[..., :4, :4] += 1.0
    moved = wla(x2, params, "w", cfg)
    ok = np.array_equal(base[..., 4:, :], moved[..., 4:, :]) and np.array_equal(base[..., :4, 4:], moved[..., :4, 4:])
    single = local_attention(parts[:1], params, "w", cfg)
    ok &= np.allclose(single, local_attention(parts, params, "w", cfg)[:1], atol=1e-6)
    return bool(ok), "bijection, window isolation"


def _check_round_trip(weights, rng, image: np.ndarray):
    enc = encode_image(image, weights)
    data = enc.coded.to_bytes()
    coded = CodedImage.from_bytes(data)
    dec = decode_latents(coded, weights)
    y_ok = np.array_equal(dec.y_hat, enc.y_hat)
    z_ok = np.array_equal(dec.z_hat, enc.z_hat)
    x_ok = np.array_equal(synthesize(dec.y_hat, weights), synthesize(enc.y_hat, weights))
    rate_ok = all(8 * len(s) <= 1.01 * b + 8 * 64 for s, b in zip(coded.substreams, enc.estimated_bits))
    bpp = 8 * len(data) / (image.shape[2] * image.shape[3])
    ok = y_ok and z_ok and x_ok and rate_ok
    return ok, f"y {y_ok}, z {z_ok}, x {x_ok}, rate {rate_ok}, {len(data)} bytes ({bpp:.3f} bpp)"


def _check_parameter_agreement(weights, rng, image: np.ndarray):
    """Entropy parameters recomputed from the decoded latents equal the encoder's."""
    enc = encode_image(image, weights)
    dec = decode_latents(CodedImage.from_bytes(enc.coded.to_bytes()), weights)
    a = schedule_params(enc.y_hat, hyper_synthesize(enc.z_hat, weights), weights)
    b = schedule_params(dec.y_hat, hyper_synthesize(dec.z_hat, weights), weights)
    ok = all(_same(p, q) for pa, pb in zip(a, b) for p, q in zip(pa, pb))
    return ok, f"{2 * len(a)} parameter grids bit-identical"


CHECKS: tuple[tuple[str, Callable], ...] = (
    ("lattice", _check_lattice),
    ("range-coder", _check_range_coder),
    ("scan-oracle", _check_scan),
    ("scan-causality", _check_scan_causality),
    ("context-causality", _check_context_causality),
    ("window-attention", _check_wla),
)


def run_selftest(weights: ModelWeights | None = None, seed: int = 0, report: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Run every check; ``report`` receives one line per check as it finishes."""
    weights = weights if weights is not None else init_weights(ModelConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    image = synthetic_image(128, seed)
    checks = list(CHECKS) + [
        ("round-trip", lambda w, r: _check_round_trip(w, r, image)),
        ("parameter-agreement", lambda w, r: _check_parameter_agreement(w, r, image)),
    ]
    results = []
    for name, fn in checks:
        start = time.perf_counter()
        try:
            passed, detail = fn(weights, rng)
        except Exception as exc:  # a crash is a failed check, not an aborted run
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(passed), detail, time.perf_counter() - start)
        results.append(res)
        if report is not None:
            report(res.line())
    return results
