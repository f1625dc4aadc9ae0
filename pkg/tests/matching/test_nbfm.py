import numpy as np
import pytest

from canm.blocks import conv1x1
from canm.errors import ConfigurationError, ShapeError
from canm.matching import (
    AdaIN,
    ConcatFusion,
    MatchingUnit,
    adain,
    count_similarities,
    global_match,
    nbfm_fuse,
    nbfm_match,
    neighborhood_mask,
    unfold_patches,
)
from canm.metrics import gradcheck
from canm.tensor import Tensor, count_macs, initialize, ops, precision


def _patches(seed=0, shape=(1, 2, 5, 6)):
    rng = np.random.default_rng(seed)
    p_deg, grid = unfold_patches(Tensor(rng.standard_normal(shape)), 3, 3)
    p_ref, _ = unfold_patches(Tensor(rng.standard_normal(shape)), 3, 3)
    return p_deg, p_ref, grid


def test_neighborhood_mask_clips_at_borders():
    mask = neighborhood_mask((4, 5), 3, 3)
    assert mask.shape == (20, 9)
    assert mask[0].sum() == 4
    assert mask[1].sum() == 6
    assert mask[6].sum() == 9


def test_attention_is_masked_and_normalised():
    p_deg, p_ref, grid = _patches()
    result = nbfm_match(p_deg, p_ref, grid, Tensor(np.ones(15)), (5, 3))
    attn = result.attention.data
    np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(attn[0][~result.valid] == 0.0)
    assert result.evaluations == 30 * 15
    assert result.offsets == (5, 3)


def test_identical_features_match_their_own_position():
    p_deg, _, grid = _patches(seed=1)
    result = nbfm_match(p_deg, p_deg, grid, Tensor(np.full(9, 10.0)), (3, 3))
    np.testing.assert_array_equal(result.argmax_offsets(), np.full((1, 5, 6), 4))
    np.testing.assert_allclose(result.similarity.data[0, :, 4], 1.0, atol=1e-12)


def test_similarity_ignores_patch_scale():
    p_deg, p_ref, grid = _patches(seed=4)
    weight = Tensor(np.random.default_rng(5).uniform(0.5, 2.0, 9))
    base = nbfm_match(p_deg, p_ref, grid, weight, (3, 3))
    scaled = nbfm_match(p_deg * 3.0, p_ref * 0.5, grid, weight, (3, 3))
    np.testing.assert_allclose(scaled.attention.data, base.attention.data, atol=1e-12)


def test_covering_neighborhood_equals_global_matching():
    p_deg, p_ref, grid = _patches(seed=2, shape=(1, 2, 3, 4))
    weight = Tensor(np.random.default_rng(3).uniform(0.5, 2.0, 5 * 7))
    local = nbfm_match(p_deg, p_ref, grid, weight, (5, 7))
    full = global_match(p_deg, p_ref, grid, weight)
    np.testing.assert_allclose(local.matched_patches.data, full.matched_patches.data, atol=1e-12)
    assert full.evaluations == 12 * 12


def test_bad_neighborhood_and_weight_rejected():
    p_deg, p_ref, grid = _patches()
    with pytest.raises(ShapeError):
        nbfm_match(p_deg, p_ref, grid, Tensor(np.ones(6)), (3, 2))
    with pytest.raises(ShapeError):
        nbfm_match(p_deg, p_ref, grid, Tensor(np.ones(8)), (3, 3))
    with pytest.raises(ShapeError):
        global_match(p_deg, p_ref, grid, Tensor(np.ones(9)))


def test_query_and_reference_must_agree():
    p_deg, _, grid = _patches()
    other, _, _ = _patches(shape=(1, 2, 5, 5))
    with pytest.raises(ShapeError):
        nbfm_match(p_deg, other, grid, Tensor(np.ones(9)), (3, 3))


@pytest.mark.parametrize("mode", ["nbfm", "gfm"])
def test_matching_unit_shape_capture_and_macs(mode):
    unit = MatchingUnit(2, (3, 3), (3, 3), (4, 4), mode=mode)
    initialize(unit, 0, std=0.3)
    rng = np.random.default_rng(4)
    shape = (1, 2, 4, 4)
    captured = []
    with count_macs() as counter:
        out = unit(Tensor(rng.standard_normal(shape)), Tensor(rng.standard_normal(shape)), capture=captured)
    assert out.shape == shape
    assert len(captured) == 1
    assert counter.total == unit.macs(shape)


def test_matching_unit_rejects_unknown_mode():
    with pytest.raises(ConfigurationError):
        MatchingUnit(2, (3, 3), (3, 3), (4, 4), mode="dense")


def test_concat_fusion_ignores_capture():
    fusion = ConcatFusion(2)
    initialize(fusion, 0)
    captured = []
    out = fusion(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 2, 4, 4))), capture=captured)
    assert out.shape == (1, 2, 4, 4)
    assert captured == []


def test_far_reference_patch_does_not_reach_the_query():
    p_deg, p_ref, grid = _patches(seed=6)
    weight = Tensor(np.random.default_rng(7).uniform(0.5, 2.0, 9))
    base = nbfm_match(p_deg, p_ref, grid, weight, (3, 3))
    poked = p_ref.data.copy()
    poked[0, 29] += 10.0  # grid position (4, 5), outside the 3x3 neighbourhood of (0, 0)
    moved = nbfm_match(p_deg, Tensor(poked), grid, weight, (3, 3))
    np.testing.assert_array_equal(moved.matched_patches.data[0, 0], base.matched_patches.data[0, 0])
    np.testing.assert_array_equal(moved.attention.data[0, 0], base.attention.data[0, 0])
    assert not np.array_equal(moved.matched_patches.data[0, 29], base.matched_patches.data[0, 29])


def test_similarity_counter_tallies_every_computed_pair():
    p_deg, p_ref, grid = _patches(shape=(2, 2, 5, 6))
    with count_similarities() as local:
        result = nbfm_match(p_deg, p_ref, grid, Tensor(np.ones(9)), (3, 3))
    with count_similarities() as full:
        global_match(p_deg, p_ref, grid, Tensor(np.ones(9 * 11)))
    assert local.total == 2 * 30 * 9
    assert result.evaluations == 30 * 9
    assert full.total == 2 * 30 * 30


def _fusion(blocks):
    fusion = conv1x1(4, 2)
    fusion.weight.data[...] = np.concatenate(blocks, axis=1).reshape(2, 4, 1, 1)
    return fusion


def test_fuse_with_identity_blocks_selects_one_input():
    rng = np.random.default_rng(8)
    matched = Tensor(rng.standard_normal((1, 2, 4, 4)))
    x_deg = Tensor(rng.standard_normal((1, 2, 4, 4)))
    eye, zero = np.eye(2), np.zeros((2, 2))
    np.testing.assert_array_equal(nbfm_fuse(matched, x_deg, _fusion([eye, zero])).data, matched.data)
    np.testing.assert_array_equal(nbfm_fuse(matched, x_deg, _fusion([zero, eye])).data, x_deg.data)
    with pytest.raises(ShapeError):
        nbfm_fuse(matched, Tensor(np.zeros((1, 2, 4, 5))), _fusion([eye, zero]))


def test_gradient_through_fuse_match_and_adain():
    rng = np.random.default_rng(9)
    with precision(np.float64):
        unit = AdaIN(2)
        initialize(unit, 0, std=0.2)
        fusion = conv1x1(4, 2)
        initialize(fusion, 1, std=0.3)
        x_ref = Tensor(rng.standard_normal((1, 2, 6, 6)))
        x_deg = Tensor(rng.standard_normal((1, 2, 6, 6)))
        weight = Tensor(1.0 + 0.3 * rng.standard_normal(9))
        readout = Tensor(0.1 * rng.standard_normal((1, 2, 6, 6)))

        def fn():
            p_ref, grid = unfold_patches(adain(x_ref, x_deg, unit), 3, 3)
            p_deg, _ = unfold_patches(x_deg, 3, 3)
            matched = nbfm_match(p_deg, p_ref, grid, weight, (3, 3)).matched_map(2, 3, 3)
            return ops.sum(nbfm_fuse(matched, x_deg, fusion) * readout)

        inputs = {"x_ref": x_ref, "x_deg": x_deg, "weight": weight}
        inputs.update({f"adain.{k}": p for k, p in unit.named_parameters()})
        inputs.update({f"fuse.{k}": p for k, p in fusion.named_parameters()})
        report = gradcheck(fn, inputs, tolerance=1e-6, name="fuse_match_adain", samples=12)
    assert report.passed, report.failures
