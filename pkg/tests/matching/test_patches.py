import numpy as np
import pytest

from canm.errors import ShapeError
from canm.matching import fold_patches, unfold_patches
from canm.matching.patches import coverage
from canm.tensor import Tensor


def test_unfold_layout_is_channel_major():
    x = np.random.default_rng(0).standard_normal((1, 2, 5, 4))
    patches, grid = unfold_patches(Tensor(x), 3, 3)
    assert grid == (5, 4)
    assert patches.shape == (1, 20, 18)
    # patch centred on pixel (2, 1): channel 1, offset (0, 2) -> pixel (1, 2)
    assert patches.data[0, 2 * 4 + 1, 1 * 9 + 0 * 3 + 2] == x[0, 1, 1, 2]
    # border patch reads zero padding
    assert patches.data[0, 0, 0] == 0.0


def test_fold_inverts_unfold():
    x = np.random.default_rng(1).standard_normal((2, 3, 6, 5))
    patches, grid = unfold_patches(Tensor(x), 3, 5)
    np.testing.assert_allclose(fold_patches(patches, grid, 3, 3, 5).data, x, atol=1e-12)


def test_coverage_counts_in_grid_patches():
    counts = coverage((4, 4), 3, 3)
    assert counts[0, 0] == 4
    assert counts[0, 1] == 6
    assert counts[1, 1] == 9


def test_even_patch_rejected():
    with pytest.raises(ShapeError):
        unfold_patches(Tensor(np.ones((1, 1, 4, 4))), 2, 3)


def test_fold_rejects_wrong_layout():
    patches, grid = unfold_patches(Tensor(np.ones((1, 2, 4, 4))), 3, 3)
    with pytest.raises(ShapeError):
        fold_patches(patches, grid, 3, 3, 3)
