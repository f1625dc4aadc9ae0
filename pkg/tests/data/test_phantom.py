import json

import numpy as np
import pytest

from canm.data import edge_correlation, export_pair, read_image, synth_pair
from canm.errors import UsageError


def test_pair_shapes_and_ranges():
    pair = synth_pair(0, 64, 48, 4)
    assert pair.ref.shape == pair.hr_target.shape == pair.lr_interp.shape == (64, 48)
    assert pair.lr_small.shape == (16, 12)
    for img in (pair.ref, pair.hr_target, pair.lr_small, pair.lr_interp):
        assert img.min() >= 0.0 and img.max() <= 1.0
    assert pair.ref.max() == 1.0


def test_same_seed_same_pair():
    a, b = synth_pair(5, 32, 32, 2), synth_pair(5, 32, 32, 2)
    np.testing.assert_array_equal(a.ref, b.ref)
    np.testing.assert_array_equal(a.lr_interp, b.lr_interp)
    assert not np.array_equal(a.ref, synth_pair(6, 32, 32, 2).ref)


def test_contrasts_share_anatomy():
    pair = synth_pair(1, 64, 64, 4)
    assert pair.metadata["edge_correlation"] > 0.0
    assert edge_correlation(pair.ref, pair.ref) == pytest.approx(1.0)
    assert not np.allclose(pair.ref, pair.hr_target)


def test_flat_image_has_no_edge_correlation():
    assert edge_correlation(np.zeros((8, 8)), np.ones((8, 8))) == 0.0


def test_bad_scale():
    with pytest.raises(UsageError):
        synth_pair(0, 32, 32, 8)


def test_export_pair(tmp_path):
    pair = synth_pair(2, 32, 32, 4)
    export_pair(pair, tmp_path / "pair")
    names = sorted(p.name for p in (tmp_path / "pair").iterdir())
    assert names == ["hr.png", "lr_interp.png", "lr_small.png", "meta.json", "ref.png"]
    meta = json.loads((tmp_path / "pair" / "meta.json").read_text())
    assert meta["scale"] == 4 and meta["seed"] == 2
    assert set(meta["normalization"]) == {"ref", "hr"}
    back = read_image(tmp_path / "pair" / "ref.png")
    assert np.max(np.abs(back - pair.ref)) <= 0.5 / 65535 + 1e-12
