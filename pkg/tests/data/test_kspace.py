import numpy as np
import pytest

from canm.data import band_mask, centered_fft, kept_band, kspace_degrade
from canm.errors import ShapeError, UsageError


def test_constant_image_survives_both_outputs():
    lr_small, lr_interp = kspace_degrade(np.full((16, 16), 0.4), 4)
    assert lr_small.shape == (4, 4)
    np.testing.assert_allclose(lr_small, 0.4, atol=1e-12)
    np.testing.assert_allclose(lr_interp, 0.4, atol=1e-12)


def test_band_limited_image_is_reproduced():
    x = np.arange(32)
    img = 0.5 + 0.25 * np.cos(2 * np.pi * 2 * x / 32)[None, :] * np.cos(2 * np.pi * 3 * x / 32)[:, None]
    _, lr_interp = kspace_degrade(img, 4)
    np.testing.assert_allclose(lr_interp, img, atol=1e-12)


def test_lowest_cosine_survives_on_smallest_grid():
    x = np.arange(8)
    img = np.tile(0.5 + 0.25 * np.cos(2 * np.pi * x / 8), (8, 1))
    _, lr_interp = kspace_degrade(img, 4)
    np.testing.assert_allclose(lr_interp, img, atol=1e-12)


def test_nyquist_pattern_is_removed():
    checker = (np.indices((16, 16)).sum(axis=0) % 2).astype(float)
    _, lr_interp = kspace_degrade(checker, 2)
    np.testing.assert_allclose(lr_interp, 0.5, atol=1e-12)


def test_retained_spectrum_matches_inside_band():
    img = np.random.default_rng(0).uniform(size=(16, 16))
    _, lr_interp = kspace_degrade(img, 2, clamp=False)
    rows, cols = kept_band(16, 16, 2)
    np.testing.assert_allclose(centered_fft(lr_interp)[rows, cols], centered_fft(img)[rows, cols], atol=1e-12)
    outside = ~band_mask(16, 16, 2)
    np.testing.assert_allclose(centered_fft(lr_interp)[outside], 0.0, atol=1e-12)


def test_kept_band_and_mask_symmetry():
    assert kept_band(16, 8, 4) == (slice(6, 10), slice(3, 5))
    mask = band_mask(16, 16, 4)
    mirror = (16 - np.arange(16)) % 16
    np.testing.assert_array_equal(mask, mask[np.ix_(mirror, mirror)])


def test_clamped_outputs_stay_in_unit_range():
    img = np.zeros((16, 16))
    img[4:12, 4:12] = 1.0
    lr_small, lr_interp = kspace_degrade(img, 4)
    for out in (lr_small, lr_interp):
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_invalid_inputs():
    with pytest.raises(UsageError):
        kspace_degrade(np.zeros((12, 12)), 3)
    with pytest.raises(ShapeError):
        kspace_degrade(np.zeros((250, 250)), 4)
    with pytest.raises(ShapeError):
        kspace_degrade(np.zeros((1, 16, 16)), 2)
