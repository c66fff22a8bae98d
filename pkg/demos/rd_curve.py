"""
Rate-distortion points and BD-rate
==================================

One weight file per operating point, averaged over a handful of images, then
compared with a second curve through the Bjontegaard rate difference.
"""

import tempfile
from pathlib import Path

import numpy as np

from sscodec import init_weights, save_weights, small_config
from sscodec.evaluation import rd_curve
from sscodec.imageio import write_image
from sscodec.metrics import RdCurve, RdPoint, bd_rate
from sscodec.selftest import synthetic_image

work = Path(tempfile.mkdtemp())
for i in range(3):
    write_image(work / f"card{i}.ppm", synthetic_image(64, seed=i))

paths = []
for lam in range(5):
    p = work / f"lambda{lam}.sscw"
    save_weights(init_weights(small_config(lambda_index=lam), seed=lam), p)
    paths.append(p)

curve = rd_curve(sorted(work.glob("*.ppm")), paths)
for point in curve.points:
    print(point.csv_row())

###############################################################################
# Random weights do not trade rate for quality in any orderly way, so for the
# BD-rate illustration use a textbook-shaped curve and a copy that spends 10%
# fewer bits at every quality.

anchor = RdCurve([RdPoint(r, q, 0.9) for r, q in
                  zip([0.12, 0.25, 0.5, 0.9, 1.4], [27.1, 29.4, 32.0, 34.6, 36.8])])
cheaper = RdCurve([RdPoint(p.bpp * 0.9, p.psnr_db, p.ms_ssim) for p in anchor.points])
print(f"BD-rate of the cheaper curve: {bd_rate(anchor, cheaper):+.2f}%")
print(f"and of the anchor against itself: {bd_rate(anchor, anchor):+.2f}%")
print("log-rate spacing:", np.round(np.diff(np.log(anchor.rates)), 3))
