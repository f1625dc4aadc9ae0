import numpy as np
import pytest

from canm.blocks import ChannelAttentionBlock, FullScaleChannelAttention, cab_forward
from canm.errors import ShapeError
from canm.tensor import Tensor, count_macs, initialize


def _x(shape=(2, 8, 8, 8), seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


@pytest.mark.parametrize("cls", [ChannelAttentionBlock, FullScaleChannelAttention])
def test_attention_is_row_stochastic_per_head(cls):
    block = cls(8, 2)
    initialize(block, 0, std=0.3)
    attn = block.attention(_x()).data
    assert attn.shape == (2, 2, 4, 4)
    assert np.all(attn >= 0.0)
    np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("cls", [ChannelAttentionBlock, FullScaleChannelAttention])
def test_output_keeps_shape_and_macs_match(cls):
    block = cls(8, 2)
    initialize(block, 1, std=0.3)
    shape = (1, 8, 8, 12)
    with count_macs() as counter:
        out = block(Tensor(np.ones(shape) + np.arange(12.0) / 12.0))
    assert out.shape == shape
    assert counter.total == block.macs(shape)


def test_pyramid_needs_map_divisible_by_four():
    block = ChannelAttentionBlock(4, 1)
    initialize(block, 0)
    with pytest.raises(ShapeError):
        block(Tensor(np.ones((1, 4, 6, 8))))


def test_pyramid_mixing_scalars_start_at_one():
    block = ChannelAttentionBlock(4, 2)
    initialize(block, 0)
    assert block.alpha1.data[0] == 1.0
    assert block.alpha2.data[0] == 1.0


def test_zero_mixing_gives_uniform_attention():
    block = ChannelAttentionBlock(4, 1)
    initialize(block, 0, std=0.3)
    block.alpha1.data[...] = 0.0
    block.alpha2.data[...] = 0.0
    np.testing.assert_allclose(block.attention(_x((1, 4, 8, 8))).data, 0.25, atol=1e-15)


def test_full_scale_is_invariant_to_query_key_scale():
    block = FullScaleChannelAttention(4, 2)
    initialize(block, 2, std=0.3)
    x = _x((1, 4, 4, 4), seed=3)
    before = block.attention(x).data
    for conv in (block.q, block.k):
        conv.weight.data *= 3.0
        conv.bias.data *= 3.0
    np.testing.assert_allclose(block.attention(x).data, before, atol=1e-12)


def test_heads_must_divide_channels():
    with pytest.raises(ShapeError):
        ChannelAttentionBlock(6, 4)
    with pytest.raises(ShapeError):
        FullScaleChannelAttention(6, 4)


@pytest.mark.parametrize("cls", [ChannelAttentionBlock, FullScaleChannelAttention])
def test_cab_forward_runs_the_block(cls):
    block = cls(8, 2)
    initialize(block, 2, std=0.3)
    x = _x(seed=3)
    np.testing.assert_array_equal(cab_forward(x, block).data, block(x).data)
