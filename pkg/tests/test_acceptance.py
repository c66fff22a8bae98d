"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import full_attention, random_ssm, rk4_zoh, scan_loops  # noqa: E402
from test_codec import lattice_normalization_report  # noqa: E402
from test_entropy import channel_probe, checkerboard_probe  # noqa: E402
from test_metrics import anchor_curve, metrics_report, scaled  # noqa: E402
from test_ssm import causality_probe, finite_difference_check  # noqa: E402

from sscodec import ModelConfig, init_weights, small_config  # noqa: E402
from sscodec.attention import WindowConfig, window_partition, window_reverse, wla, wla_manifest  # noqa: E402
from sscodec.cli import main  # noqa: E402
from sscodec.codec.container import CodedImage  # noqa: E402
from sscodec.codec.pipeline import decode_image, decode_latents  # noqa: E402
from sscodec.entropy import checkerboard_mask  # noqa: E402
from sscodec.evaluation import encode_file_image  # noqa: E402
from sscodec.imageio import to_tensor, write_image  # noqa: E402
from sscodec.metrics import bd_rate, ms_ssim, psnr  # noqa: E402
from sscodec.ssm import discretize, ss2d_paths  # noqa: E402
from sscodec.transform import synthesize  # noqa: E402


def report(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    return passed


@pytest.fixture
def out(capsys):
    """report() that gets through pytest's output capture."""
    def say(*args):
        with capsys.disabled():
            print()
            return report(*args)
    return say


def model_for(i):
    """Every fifth instance uses the published architecture, the rest the small one."""
    lam = i % 5
    cfg = ModelConfig(lambda_index=lam) if i % 5 == 0 else small_config(lambda_index=lam)
    return init_weights(cfg, seed=1000 + i)


def smooth_image(rng, h, w):
    coarse = rng.uniform(size=(3, h // 8 + 2, w // 8 + 2))
    img = np.kron(coarse, np.ones((8, 8)))[:, :h, :w] + rng.normal(scale=0.05, size=(3, h, w))
    return np.clip(img, 0, 1).astype(np.float32)[None]


# 1 -------------------------------------------------------------------------

def criterion_round_trip(count=50):
    start = time.perf_counter()
    failures = []
    for i in range(count):
        weights = model_for(i)
        rng = np.random.default_rng(i)
        h, w = (int(v) for v in rng.integers(64, 257, 2))
        x = smooth_image(rng, h, w)
        enc = encode_file_image(x, weights)
        coded = CodedImage.from_bytes(enc.coded.to_bytes())
        dec = decode_latents(coded, weights)
        x_hat = decode_image(coded, weights)
        direct = synthesize(enc.y_hat, weights)[..., :h, :w]
        ok = (np.array_equal(dec.y_hat, enc.y_hat) and np.array_equal(dec.z_hat, enc.z_hat)
              and np.array_equal(x_hat, direct) and x_hat.shape == x.shape)
        if not ok:
            failures.append(i)
    elapsed = time.perf_counter() - start
    return not failures and elapsed <= 300, f"{count} models, {len(failures)} failures, {elapsed:.0f}s"


def test_criterion_1_lossless_round_trip(out):
    passed, detail = criterion_round_trip()
    assert out(1, "lossless latent round trip", passed, detail)


# 2 -------------------------------------------------------------------------

def analytic_bits(enc, cfg):
    """-log2 of the continuous Gaussian likelihoods, split per substream."""
    c = cfg.chunk
    mask = checkerboard_mask(*enc.y.shape[2:])
    with np.errstate(divide="ignore"):  # p underflows to 0 far in the tails: infinite information
        bits = [-np.log2(enc.z_likelihoods).sum()]
        for k in range(cfg.K):
            lik = enc.y_likelihoods[:, k * c : (k + 1) * c]
            bits += [-np.log2(lik[..., mask]).sum(), -np.log2(lik[..., ~mask]).sum()]
    return bits


def criterion_rate(count=20):
    worst_table = 0.0
    coder_above_analytic = 0
    checked = 0
    for i in range(count):
        weights = model_for(i)
        rng = np.random.default_rng(100 + i)
        h, w = (int(v) for v in rng.integers(64, 193, 2))
        enc = encode_file_image(smooth_image(rng, h, w), weights)
        for data, table, gauss in zip(enc.coded.substreams, enc.estimated_bits, analytic_bits(enc, weights.config)):
            measured = 8 * len(data)
            slack = 0.01 * table + 8 * 64
            worst_table = max(worst_table, abs(measured - table) / slack)
            # the coder may beat the continuous model (frequency floor, escapes) but never lose to it
            if measured > 1.01 * gauss + 8 * 64:
                coder_above_analytic += 1
            checked += 1
    passed = worst_table <= 1.0 and coder_above_analytic == 0
    return passed, (f"{checked} substreams, worst |measured - estimate| = {worst_table:.3f} of tolerance, "
                    f"{coder_above_analytic} above the Gaussian bound")


def test_criterion_2_rate_accounting(out):
    passed, detail = criterion_rate()
    assert out(2, "rate accounting", passed, detail)


# 3 -------------------------------------------------------------------------

def test_criterion_3_likelihood_normalization(out):
    valid, worst = lattice_normalization_report()
    passed = valid and worst < 1e-6
    assert out(3, "likelihood normalization", passed, f"64x256 tables valid={valid}, max |sum p - 1| = {worst:.2e}")


# 4 -------------------------------------------------------------------------

def criterion_discretization():
    worst = 0.0
    series_hits = 0
    for a in (-1e-3, -0.05, -0.5, -1.0, -4.0, -16.0):
        for delta in np.geomspace(1e-4, 1.0, 9):
            for b in (1.0, -2.5):
                a_bar, b_bar = discretize(a, b, delta)
                ref_a, ref_b = rk4_zoh(a, b, delta)
                worst = max(worst, abs(a_bar - ref_a) / abs(ref_a), abs(b_bar - ref_b) / abs(ref_b))
                series_hits += abs(a * delta) < 1e-4
    a_bar, b_bar = discretize(-1.0, 1.0, math.log(2))
    worked = abs(a_bar - 0.5) < 1e-9 and abs(b_bar - 0.5) < 1e-9
    passed = worst < 1e-6 and worked and series_hits > 0
    return passed, f"max rel err {worst:.1e} over {6 * 9 * 2} cases ({series_hits} on the series branch), worked value ok={worked}"


def test_criterion_4_discretization(out):
    passed, detail = criterion_discretization()
    assert out(4, "ZOH discretization", passed, detail)


# 5 -------------------------------------------------------------------------

def criterion_scan(instances=20, probes=200):
    worst = 0.0
    for seed in range(instances):
        rng = np.random.default_rng(seed)
        d, n, length = int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 33))
        params = [random_ssm(rng, d, n) for _ in range(4)]
        x = rng.normal(size=(1, d, 1, length)).astype(np.float32)
        paths = ss2d_paths(x, params)
        row = x[0, :, 0].T.astype(np.float64)
        fwd = scan_loops(row, params[0])
        rev = scan_loops(row[::-1], params[1])[::-1]
        worst = max(worst, np.max(np.abs(paths[0][0, :, 0].T - fwd)), np.max(np.abs(paths[1][0, :, 0].T - rev)))
        # on one row the column-major traversal visits the same sites in the same order
        col_fwd = scan_loops(row, params[2])
        col_rev = scan_loops(row[::-1], params[3])[::-1]
        worst = max(worst, np.max(np.abs(paths[2][0, :, 0].T - col_fwd)), np.max(np.abs(paths[3][0, :, 0].T - col_rev)))
    causal = sum(causality_probe(10_000 + s) for s in range(probes))
    passed = worst < 1e-5 and causal == probes
    return passed, f"max |ss2d - 1-D oracle| = {worst:.1e}, causality {causal}/{probes}"


def test_criterion_5_scan_equivalence_and_causality(out):
    passed, detail = criterion_scan()
    assert out(5, "scan equivalence and causality", passed, detail)


# 6 -------------------------------------------------------------------------

def test_criterion_6_gradient_check(out):
    errors = [finite_difference_check(seed) for seed in range(50)]
    worst = max(errors)
    assert out(6, "selective scan gradient", worst < 1e-3, f"50 instances, max rel err {worst:.1e}")


# 7 -------------------------------------------------------------------------

def test_criterion_7_context_causality(out):
    channel = sum(channel_probe(init_weights(small_config(), seed=s), s) for s in range(20))
    board = sum(checkerboard_probe(init_weights(small_config(), seed=s), 50 + s) for s in range(20))
    passed = channel == 20 and board == 20
    assert out(7, "context causality", passed, f"channel {channel}/20, checkerboard {board}/20")


# 8 -------------------------------------------------------------------------

def criterion_wla():
    rng = np.random.default_rng(8)
    bijective = True
    for w in (1, 2, 4, 6, 8, 10):
        for _ in range(5):
            gh, gw, c = (int(v) for v in rng.integers(1, 4, 3))
            x = rng.normal(size=(1, c, gh * w, gw * w)).astype(np.float32)
            bijective &= np.array_equal(window_reverse(window_partition(x, w), w, gh * w, gw * w), x)
    worst = 0.0
    isolated = True
    for trial in range(5):
        cfg = WindowConfig(window=8, heads=int(rng.choice([1, 2, 4])), head_dim=int(rng.choice([2, 4, 8])))
        p = {k: rng.normal(scale=0.3, size=s).astype(np.float32) for k, s in wla_manifest("a", cfg.width).items()}
        x = rng.normal(size=(1, cfg.width, 8, 8)).astype(np.float32)
        got = wla(x, p, "a", cfg)[0].reshape(cfg.width, -1).T
        want = full_attention(x[0].reshape(cfg.width, -1).T, p, "a", cfg.heads, cfg.head_dim)
        worst = max(worst, float(np.max(np.abs(got - want))))
        big = rng.normal(size=(1, cfg.width, 24, 16)).astype(np.float32)
        base = wla(big, p, "a", cfg)
        wy, wx = int(rng.integers(3)), int(rng.integers(2))
        moved_in = big.copy()
        moved_in[..., wy * 8 : wy * 8 + 8, wx * 8 : wx * 8 + 8] += 1.0
        moved = wla(moved_in, p, "a", cfg)
        outside = np.ones((24, 16), bool)
        outside[wy * 8 : wy * 8 + 8, wx * 8 : wx * 8 + 8] = False
        isolated &= np.array_equal(base[..., outside], moved[..., outside])
    passed = bool(bijective) and worst < 1e-5 and bool(isolated)
    return passed, f"bijection={bool(bijective)}, max |wla - full attention| = {worst:.1e}, isolation={bool(isolated)}"


def test_criterion_8_wla(out):
    passed, detail = criterion_wla()
    assert out(8, "window local attention", passed, detail)


# 9 -------------------------------------------------------------------------

def criterion_metrics():
    x = np.zeros((3, 16, 16))
    closed_form = [
        (psnr(x, x + 1 / 255), 20 * math.log10(255)),
        (psnr(x, x + 1.0), 0.0),
        (psnr(x, x + 0.1), 20.0),
        (psnr(x, x), 100.0),
    ]
    psnr_err = max(abs(a - b) for a, b in closed_form)
    img = np.random.default_rng(9).uniform(size=(3, 192, 192))
    identity = ms_ssim(img, img)
    a = anchor_curve()
    self_bd = bd_rate(a, a)
    scaled_bd = bd_rate(a, scaled(a, 0.9))
    passed = (psnr_err < 1e-6 and abs(identity - 1) < 1e-12 and f"{self_bd:.2f}" in ("0.00", "-0.00")
              and abs(scaled_bd + 10.0) <= 0.1 and all(metrics_report().values()))
    return passed, (f"PSNR err {psnr_err:.1e} dB, MS-SSIM(x,x)={identity:.12f}, "
                    f"BD self {self_bd:+.2f}%, BD x0.9 {scaled_bd:+.3f}%")


def test_criterion_9_metrics(out):
    passed, detail = criterion_metrics()
    assert out(9, "metrics", passed, detail)


# 10 ------------------------------------------------------------------------

def eval_run(capsys, image, weights, bits):
    code = main(["eval", "--input", str(image), "--weights", str(weights), "--out", str(bits)])
    printed = capsys.readouterr().out
    return code, printed, bits.read_bytes()


def test_criterion_10_determinism(tmp_path, capsys, out):
    rng = np.random.default_rng(10)
    image = tmp_path / "img.ppm"
    write_image(image, to_tensor(rng.integers(0, 256, size=(100, 150, 3), dtype=np.uint8)))
    weights = tmp_path / "w.sscw"
    main(["init-weights", "--seed", "10", "--out", str(weights)])
    capsys.readouterr()
    first = eval_run(capsys, image, weights, tmp_path / "a.mbic")
    second = eval_run(capsys, image, weights, tmp_path / "b.mbic")
    identical = first == second and first[0] == 0 and len(first[2]) > 0
    start = time.perf_counter()
    code = main(["selftest"])
    capsys.readouterr()
    elapsed = time.perf_counter() - start
    passed = identical and code == 0 and elapsed < 60
    assert out(10, "determinism", passed,
               f"bitstreams/output identical={identical}, selftest exit {code} in {elapsed:.1f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
