import numpy as np
import pytest

from sscodec.cli import (
    EXIT_BITSTREAM,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_WEIGHTS,
    main,
)
from sscodec.imageio import read_image, to_tensor, write_image
from sscodec.metrics import read_curve


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    imgs = d / "images"
    imgs.mkdir()
    for i, (h, w) in enumerate([(64, 64), (70, 90)]):
        px = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        write_image(imgs / f"im{i}.ppm", to_tensor(px))
    for lam in range(4):
        assert main(["init-weights", "--small", "--lambda-index", str(lam), "--seed", str(lam),
                     "--out", str(d / f"w{lam}.sscw")]) == 0
    return d


def test_init_weights_reports_checksum(workdir, capsys):
    code, out, _ = run(capsys, "--seed", "5", "init-weights", "--small", "--out", str(workdir / "x.sscw"))
    assert code == EXIT_OK and "checksum" in out
    code2, out2, _ = run(capsys, "init-weights", "--small", "--seed", "5", "--out", str(workdir / "y.sscw"))
    assert (workdir / "x.sscw").read_bytes() == (workdir / "y.sscw").read_bytes()


def test_encode_decode_round_trip(workdir, capsys):
    src = workdir / "images" / "im1.ppm"
    bits = workdir / "im1.mbic"
    rec = workdir / "im1_rec.ppm"
    code, out, _ = run(capsys, "encode", "--input", str(src), "--weights", str(workdir / "w0.sscw"),
                       "--out", str(bits), "--pad-report")
    assert code == EXIT_OK
    assert "input 90x70 padded to 128x128" in out
    enc_bpp = next(line for line in out.splitlines() if line.startswith("bpp:"))
    assert "y5.nonanchor" in out and "header+framing" in out
    code, out, _ = run(capsys, "decode", "--input", str(bits), "--weights", str(workdir / "w0.sscw"),
                       "--out", str(rec))
    assert code == EXIT_OK
    assert out.strip() == enc_bpp
    assert read_image(rec).shape == (1, 3, 70, 90)


def test_eval_matches_encode(workdir, capsys):
    src = workdir / "images" / "im0.ppm"
    w = str(workdir / "w1.sscw")
    code, out, _ = run(capsys, "encode", "--input", str(src), "--weights", w, "--out", str(workdir / "a.mbic"))
    enc_bpp = float(out.split()[1])
    code, out, err = run(capsys, "eval", "--input", str(src), "--weights", w, "--out", str(workdir / "b.mbic"),
                         "--report")
    assert code == EXIT_OK
    label, b, p, s = out.strip().split(",")
    assert label == "im0" and float(b) == pytest.approx(enc_bpp, abs=1e-6)
    assert float(p) > 5 and 0 <= float(s) <= 1
    assert "y1.anchor" in err
    assert (workdir / "a.mbic").read_bytes() == (workdir / "b.mbic").read_bytes()


def test_missing_weights_writes_nothing(workdir, capsys):
    out_path = workdir / "never.mbic"
    code, _, err = run(capsys, "encode", "--input", str(workdir / "images" / "im0.ppm"),
                       "--weights", str(workdir / "nope.sscw"), "--out", str(out_path))
    assert code == EXIT_WEIGHTS and "not found" in err
    assert not out_path.exists()


def test_missing_input_is_io_error(workdir, capsys):
    code, _, _ = run(capsys, "eval", "--input", str(workdir / "missing.ppm"), "--weights", str(workdir / "w0.sscw"))
    assert code == EXIT_IO


def test_corrupt_weights(workdir, capsys):
    bad = workdir / "bad.sscw"
    data = bytearray((workdir / "w0.sscw").read_bytes())
    data[100] ^= 0xFF
    bad.write_bytes(bytes(data))
    code, _, err = run(capsys, "eval", "--input", str(workdir / "images" / "im0.ppm"), "--weights", str(bad))
    assert code == EXIT_WEIGHTS and "checksum" in err.lower()


def test_tampered_bitstream(workdir, capsys):
    src = workdir / "images" / "im0.ppm"
    w = str(workdir / "w0.sscw")
    bits = workdir / "t.mbic"
    run(capsys, "encode", "--input", str(src), "--weights", w, "--out", str(bits))
    data = bytearray(bits.read_bytes())
    data[-3] ^= 0x01
    bits.write_bytes(bytes(data))
    code, _, err = run(capsys, "decode", "--input", str(bits), "--weights", w, "--out", str(workdir / "t.ppm"))
    assert code == EXIT_BITSTREAM and "CRC" in err
    bits.write_bytes(bytes(data[:20]))
    code, _, _ = run(capsys, "decode", "--input", str(bits), "--weights", w, "--out", str(workdir / "t.ppm"))
    assert code == EXIT_BITSTREAM


def test_decode_with_other_weights(workdir, capsys):
    src = workdir / "images" / "im0.ppm"
    bits = workdir / "m.mbic"
    run(capsys, "encode", "--input", str(src), "--weights", str(workdir / "w0.sscw"), "--out", str(bits))
    code, _, _ = run(capsys, "decode", "--input", str(bits), "--weights", str(workdir / "w1.sscw"),
                     "--out", str(workdir / "m.ppm"))
    assert code == EXIT_WEIGHTS


def test_rd_curve_and_bd_rate(workdir, capsys):
    weights = [str(workdir / f"w{i}.sscw") for i in range(4)]
    csv = workdir / "curve.csv"
    code, out, _ = run(capsys, "rd-curve", "--input-dir", str(workdir / "images"), "--weights", *weights,
                       "--out", str(csv))
    assert code == EXIT_OK
    with open(csv) as fh:
        curve = read_curve(fh)
    assert len(curve) == 4
    assert sorted(p.label for p in curve.points) == ["w0", "w1", "w2", "w3"]
    assert list(curve.rates) == sorted(curve.rates)
    code, out, _ = run(capsys, "bd-rate", "--anchor", str(csv), "--test", str(csv))
    assert code == EXIT_OK and out.strip() == "BD-rate: +0.00%"


def test_rd_curve_errors(workdir, capsys):
    code, _, _ = run(capsys, "rd-curve", "--input-dir", str(workdir / "none"), "--weights", "x",
                     "--out", str(workdir / "c.csv"))
    assert code == EXIT_IO
    code, _, _ = run(capsys, "rd-curve", "--input-dir", str(workdir / "images"),
                     "--weights", str(workdir / "nope.sscw"), "--out", str(workdir / "c.csv"))
    assert code == EXIT_WEIGHTS


def test_bd_rate_needs_four_points(workdir, capsys):
    short = workdir / "short.csv"
    short.write_text("label,bpp,psnr_db,ms_ssim\na,0.1,20,0.5\nb,0.2,22,0.6\n")
    code, _, err = run(capsys, "bd-rate", "--anchor", str(short), "--test", str(short))
    assert code == EXIT_USAGE and "error" in err


def test_manifest(workdir, capsys):
    code, out, _ = run(capsys, "manifest")
    assert code == EXIT_OK and "g_a.conv0.weight" in out
    code, out2, _ = run(capsys, "manifest", "--weights", str(workdir / "w0.sscw"))
    assert code == EXIT_OK and out2 != out


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["transmogrify"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["encode", "--input", "x"])
    assert info.value.code == EXIT_USAGE


def test_selftest_command(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == EXIT_OK
    assert "selftest passed" in out
    assert "[FAIL]" not in out
