"""
Four scans and a causal context
===============================

How the 2-D selective scan walks a feature map, and which latents the
entropy model is allowed to look at when it predicts a chunk.
"""

import numpy as np

from sscodec import init_weights, small_config
from sscodec.entropy import checkerboard_mask, schedule_params
from sscodec.ssm import SCAN_ORDERS, SsmParams, scan_path, ss2d_paths

# Visiting order of each path on a 3x4 grid, written back onto the grid
for order in SCAN_ORDERS:
    path = scan_path(3, 4, order)
    step = np.empty(12, int)
    step[path] = np.arange(12)
    print(order)
    print(step.reshape(3, 4))

###############################################################################
# Each path is causal along its own order: poke one site and only that site
# and the ones visited after it change.

rng = np.random.default_rng(0)
d, n = 2, 4
params = [
    SsmParams(
        A=-np.exp(rng.normal(size=(d, n))), delta_proj=rng.normal(scale=0.5, size=(d, d)),
        delta_bias=np.full(d, -1.0), B_proj=rng.normal(size=(n, d)),
        C_proj=rng.normal(size=(n, d)), D_skip=np.ones(d),
    )
    for _ in SCAN_ORDERS
]
x = rng.normal(size=(1, d, 3, 4)).astype(np.float32)
poked = x.copy()
poked[0, :, 1, 2] += 1.0
for order, a, b in zip(SCAN_ORDERS, ss2d_paths(x, params), ss2d_paths(poked, params)):
    changed = np.any(a != b, axis=(0, 1)).astype(int)
    print(order, "changed sites:")
    print(changed)

###############################################################################
# The entropy model codes chunk by chunk, anchors (the "1" squares below)
# before non-anchors. Changing the non-anchors of chunk 3 leaves every
# parameter for chunks 1-3 untouched.

print(checkerboard_mask(4, 6).astype(int))

weights = init_weights(small_config(), seed=1)
cfg = weights.config
hyper = rng.normal(size=(1, 2 * cfg.M, 8, 8)).astype(np.float32)
y_hat = np.rint(rng.normal(scale=2, size=(1, cfg.M, 8, 8))).astype(np.float32)
before = schedule_params(y_hat, hyper, weights)

k = 2
edited = y_hat.copy()
chunk = edited[:, k * cfg.chunk : (k + 1) * cfg.chunk]
chunk[..., ~checkerboard_mask(8, 8)] += 5
after = schedule_params(edited, hyper, weights)
for j, ((a0, a1), (b0, b1)) in enumerate(zip(before, after)):
    same = np.array_equal(a0.mu, b0.mu) and np.array_equal(a1.mu, b1.mu)
    print(f"chunk {j + 1}: parameters {'unchanged' if same else 'changed'}")
