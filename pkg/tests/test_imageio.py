import numpy as np
import pytest

from sscodec.imageio import (
    ImageFormatError,
    decode_ppm,
    encode_ppm,
    read_image,
    to_pixels,
    to_tensor,
    write_image,
)


def pixels(seed, h=5, w=7):
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_ppm_round_trip():
    px = pixels(0)
    data = encode_ppm(px)
    assert data.startswith(b"P6\n7 5\n255\n")
    assert np.array_equal(decode_ppm(data), px)


def test_ppm_header_comments_and_whitespace():
    px = pixels(1, 2, 2)
    data = b"P6 # c\n 2\t2\n#x\n255\n" + px.tobytes()
    assert np.array_equal(decode_ppm(data), px)


@pytest.mark.parametrize("data", [b"P5\n1 1\n255\n\0", b"P6\n2 2\n65535\n" + b"\0" * 24, b"P6\n2 2\n255\n\0\0", b"P6\n"])
def test_ppm_rejects(data):
    with pytest.raises(ImageFormatError):
        decode_ppm(data)


def test_tensor_conversion_exact():
    px = pixels(2)
    x = to_tensor(px)
    assert x.shape == (1, 3, 5, 7) and x.dtype == np.float32
    assert np.array_equal(to_pixels(x), px)
    assert to_pixels(np.full((1, 3, 1, 1), 2.0)).max() == 255


@pytest.mark.parametrize("suffix", [".ppm", ".png"])
def test_file_round_trip(tmp_path, suffix):
    if suffix == ".png":
        pytest.importorskip("PIL")
    px = pixels(3, 9, 4)
    path = tmp_path / f"img{suffix}"
    write_image(path, to_tensor(px))
    assert np.array_equal(to_pixels(read_image(path)), px)


def test_unknown_content(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"GIF89a")
    with pytest.raises(ImageFormatError):
        read_image(path)
