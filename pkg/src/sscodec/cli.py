"""Command-line front end. Every command is a thin wrapper over the library."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .codec.container import CodedImage
from .codec.pipeline import decode_image, padded_size
from .config import LAMBDAS, ModelConfig, small_config
from .errors import CodecError, WeightFileError, WeightMismatchError
from .evaluation import encode_file_image, evaluate, list_images, rd_curve, stream_bpp, substream_report
from .imageio import ImageFormatError, read_image, write_image
from .metrics import bd_rate, read_curve, write_curve
from .selftest import run_selftest
from .weights import format_manifest, init_weights, load_weights, save_weights

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_WEIGHTS = 4
EXIT_BITSTREAM = 5
EXIT_SELFTEST = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_input_image(path):
    try:
        return read_image(path)
    except (OSError, ImageFormatError) as exc:
        raise CliError(f"cannot read image {path}: {exc}", EXIT_IO) from exc


def _load_weights(path):
    try:
        return load_weights(path)
    except FileNotFoundError as exc:
        raise CliError(f"weights file not found: {path}", EXIT_WEIGHTS) from exc
    except OSError as exc:
        raise CliError(f"cannot read weights {path}: {exc}", EXIT_WEIGHTS) from exc


def _write_bytes(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def cmd_encode(args) -> int:
    weights = _load_weights(args.weights)
    x = _read_input_image(args.input)
    h, w = x.shape[2:]
    enc = encode_file_image(x, weights)
    _write_bytes(args.out, enc.coded.to_bytes())
    if args.pad_report:
        print(f"input {w}x{h} padded to {padded_size(w)}x{padded_size(h)}")
    print(f"bpp: {stream_bpp(enc.coded):.6f}  ({len(enc.coded)} bytes)")
    for line in substream_report(enc.coded, enc.estimated_bits):
        print(line)
    return EXIT_OK


def cmd_decode(args) -> int:
    weights = _load_weights(args.weights)
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read bitstream {args.input}: {exc}", EXIT_IO) from exc
    coded = CodedImage.from_bytes(data)
    x_hat = decode_image(coded, weights)
    try:
        write_image(args.out, x_hat)
    except (OSError, ImageFormatError) as exc:
        raise CliError(f"cannot write image {args.out}: {exc}", EXIT_IO) from exc
    print(f"bpp: {stream_bpp(coded):.6f}  ({len(coded)} bytes)")
    return EXIT_OK


def cmd_eval(args) -> int:
    weights = _load_weights(args.weights)
    x = _read_input_image(args.input)
    result = evaluate(x, weights, label=Path(args.input).stem)
    if args.out:
        _write_bytes(args.out, result.encoded.coded.to_bytes())
    if args.report:
        for line in substream_report(result.encoded.coded, result.encoded.estimated_bits):
            print(line, file=sys.stderr)
    print(result.point.csv_row())
    return EXIT_OK


def cmd_rd_curve(args) -> int:
    images = list_images(args.input_dir) if Path(args.input_dir).is_dir() else None
    if images is None:
        raise CliError(f"not a directory: {args.input_dir}", EXIT_IO)
    if not images:
        raise CliError(f"no .ppm/.png images in {args.input_dir}", EXIT_IO)
    for w in args.weights:
        if not Path(w).is_file():
            raise CliError(f"weights file not found: {w}", EXIT_WEIGHTS)
    curve = rd_curve(images, args.weights, jobs=args.jobs)
    try:
        with open(args.out, "w", newline="") as fh:
            write_curve(curve, fh)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    for p in curve.points:
        print(p.csv_row())
    return EXIT_OK


def cmd_bd_rate(args) -> int:
    try:
        with open(args.anchor) as fa, open(args.test) as ft:
            anchor, test = read_curve(fa), read_curve(ft)
    except OSError as exc:
        raise CliError(f"cannot read curve: {exc}", EXIT_IO) from exc
    try:
        value = bd_rate(anchor.sorted(), test.sorted())
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    print(f"BD-rate: {value:+.2f}%")
    return EXIT_OK


def cmd_selftest(args) -> int:
    weights = _load_weights(args.weights) if args.weights else None
    start = time.perf_counter()
    results = run_selftest(weights, seed=args.seed, report=print)
    failed = [r.name for r in results if not r.passed]
    total = time.perf_counter() - start
    if failed:
        print(f"selftest FAILED ({', '.join(failed)}) in {total:.1f}s")
        return EXIT_SELFTEST
    print(f"selftest passed: {len(results)} checks in {total:.1f}s")
    return EXIT_OK


def _config_from_args(args) -> ModelConfig:
    factory = small_config if args.small else ModelConfig
    return factory(lambda_index=args.lambda_index)


def cmd_init_weights(args) -> int:
    weights = init_weights(_config_from_args(args), seed=args.seed)
    try:
        save_weights(weights, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"wrote {len(weights)} tensors, checksum {weights.checksum:016x}")
    return EXIT_OK


def cmd_manifest(args) -> int:
    cfg = _load_weights(args.weights).config if args.weights else _config_from_args(args)
    print(format_manifest(cfg))
    return EXIT_OK


def _add_model_flags(p):
    p.add_argument("--small", action="store_true", help="narrow test-size architecture")
    p.add_argument("--lambda-index", type=int, default=0, choices=range(len(LAMBDAS)),
                   help="rate-distortion operating point 0..4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sscodec", description="State-space learned image codec")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    # --seed is accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = command("encode", help="compress an image")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pad-report", action="store_true", help="print original and padded sizes")
    p.set_defaults(func=cmd_encode)

    p = command("decode", help="decompress a bitstream")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = command("eval", help="round trip in memory and print label,bpp,psnr_db,ms_ssim")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", help="also write the bitstream here")
    p.add_argument("--report", action="store_true", help="per-substream sizes on stderr")
    p.set_defaults(func=cmd_eval)

    p = command("rd-curve", help="average RD points over a directory, one per weight file")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--weights", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_rd_curve)

    p = command("bd-rate", help="Bjontegaard rate difference of two RD curves")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_bd_rate)

    p = command("selftest", help="run the built-in consistency checks")
    p.add_argument("--weights", help="check these weights instead of seeded ones")
    p.set_defaults(func=cmd_selftest)

    p = command("init-weights", help="write seeded random weights")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_init_weights)

    p = command("manifest", help="list parameter names and shapes")
    p.add_argument("--weights", help="read the architecture from a weight file")
    _add_model_flags(p)
    p.set_defaults(func=cmd_manifest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (WeightFileError, WeightMismatchError) as exc:
        print(f"weights error: {exc}", file=sys.stderr)
        return EXIT_WEIGHTS
    except CodecError as exc:
        print(f"bitstream error: {exc}", file=sys.stderr)
        return EXIT_BITSTREAM


if __name__ == "__main__":
    sys.exit(main())
