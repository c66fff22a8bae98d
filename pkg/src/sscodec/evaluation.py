"""Encode/decode/measure helpers shared by the command line and demos."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .codec.container import CodedImage
from .codec.pipeline import EncodeResult, decode_image, encode_image, pad_image
from .imageio import IMAGE_SUFFIXES, read_image
from .metrics import RdCurve, RdPoint, bpp, ms_ssim, psnr
from .weights import ModelWeights, load_weights


def encode_file_image(x: np.ndarray, weights: ModelWeights) -> EncodeResult:
    """Pad an arbitrary-size image by edge replication and encode it."""
    h, w = x.shape[2:]
    return encode_image(pad_image(x), weights, original_size=(w, h))


def stream_bpp(coded: CodedImage) -> float:
    """Rate of the whole container (header and framing included) on original dims."""
    return bpp(coded.total_bits(), coded.width, coded.height)


def substream_report(coded: CodedImage, estimated_bits: Sequence[float] | None = None) -> list[str]:
    names = ["z"] + [f"y{k + 1}.{phase}" for k in range(coded.num_chunks) for phase in ("anchor", "nonanchor")]
    pixels = coded.width * coded.height
    lines = []
    for i, (name, s) in enumerate(zip(names, coded.substreams)):
        line = f"  {name:<14} {len(s):>8} bytes  {8 * len(s) / pixels:.4f} bpp"
        if estimated_bits is not None:
            line += f"  (model {estimated_bits[i] / 8:.1f} bytes)"
        lines.append(line)
    overhead = len(coded) - sum(len(s) for s in coded.substreams)
    lines.append(f"  {'header+framing':<14} {overhead:>8} bytes")
    return lines


@dataclass
class Evaluation:
    point: RdPoint
    encoded: EncodeResult
    x_hat: np.ndarray


def evaluate(x: np.ndarray, weights: ModelWeights, label: str = "") -> Evaluation:
    """Encode, serialize, parse, decode in memory and measure on original dims."""
    enc = encode_file_image(x, weights)
    coded = CodedImage.from_bytes(enc.coded.to_bytes())
    x_hat = decode_image(coded, weights)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = ms_ssim(x, x_hat)
    point = RdPoint(stream_bpp(coded), psnr(x, x_hat), min(max(s, 0.0), 1.0), label)
    return Evaluation(point, enc, x_hat)


def list_images(directory: str | os.PathLike) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _evaluate_path(args) -> RdPoint:
    path, weight_path = args
    return evaluate(read_image(path), load_weights(weight_path), Path(path).stem).point


def rd_curve(images: Sequence[str | os.PathLike], weight_paths: Sequence[str | os.PathLike], jobs: int = 1) -> RdCurve:
    """One averaged RD point per weight file (in the order given)."""
    if not images:
        raise ValueError("no images to evaluate")
    tasks = [(str(p), str(w)) for w in weight_paths for p in images]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_path, tasks))
    else:
        results = [_evaluate_path(t) for t in tasks]
    points = []
    n = len(images)
    for i, w in enumerate(weight_paths):
        group = results[i * n : (i + 1) * n]
        points.append(RdPoint(
            float(np.mean([p.bpp for p in group])),
            float(np.mean([p.psnr_db for p in group])),
            float(np.mean([p.ms_ssim for p in group])),
            Path(w).stem,
        ))
    curve = RdCurve(points).sorted()
    rates = curve.rates
    if np.any(np.diff(rates) <= 0):
        warnings.warn("RD points share a rate (weight files may come from one seed)")
    return curve
