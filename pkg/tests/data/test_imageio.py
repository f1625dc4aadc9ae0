import numpy as np
import pytest
from PIL import Image

from canm.data import encode_png, image_bits, quantize, read_image, write_image
from canm.errors import ImageIOError, UsageError


@pytest.mark.parametrize("bits", [8, 16])
def test_write_read_within_half_a_level(tmp_path, bits):
    img = np.random.default_rng(0).uniform(size=(9, 7))
    write_image(img, tmp_path / "img.png", bits=bits)
    back = read_image(tmp_path / "img.png")
    assert back.shape == (9, 7)
    assert np.max(np.abs(back - img)) <= 0.5 / (2**bits - 1) + 1e-12


def test_quantize_clips_and_rounds():
    img = np.array([[-0.2, 1.7, 0.25, 0.8]])
    levels = quantize(img, bits=8)
    np.testing.assert_array_equal(levels, [[0, 255, np.rint(0.25 * 255), np.rint(0.8 * 255)]])
    assert levels.dtype == np.uint8
    assert quantize(np.ones((1, 1)), bits=16)[0, 0] == 65535


def test_unsupported_bit_depth():
    with pytest.raises(UsageError):
        encode_png(np.zeros((2, 2)), bits=12)


@pytest.mark.parametrize("bits", [8, 16])
def test_image_bits_reports_the_stored_depth(tmp_path, bits):
    write_image(np.full((4, 4), 0.5), tmp_path / "img.png", bits=bits)
    assert image_bits(tmp_path / "img.png") == bits


def test_read_errors(tmp_path):
    with pytest.raises(ImageIOError):
        read_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(ImageIOError):
        read_image(tmp_path / "junk.png")
    Image.new("RGB", (4, 4)).save(tmp_path / "rgb.png")
    with pytest.raises(ImageIOError):
        read_image(tmp_path / "rgb.png")
    with pytest.raises(ImageIOError):
        image_bits(tmp_path / "rgb.png")
