import numpy as np
import pytest

from canm.blocks import DecoderStage, EncoderStage, stage_forward
from canm.errors import ShapeError, UsageError
from canm.tensor import Tensor, count_macs, initialize

LAYER = dict(wa_heads=2, ca_heads=2, window=4)


def test_encoder_alternates_shift_and_downsamples():
    stage = EncoderStage(8, 3, 16, **LAYER)
    initialize(stage, 0)
    assert [layer.wab.shift for layer in stage.ctl] == [False, True, False]
    feature, deeper = stage(Tensor(np.ones((1, 8, 8, 8))))
    assert feature.shape == (1, 8, 8, 8)
    assert deeper.shape == (1, 16, 4, 4)


def test_last_encoder_stage_has_no_downsampler():
    stage = EncoderStage(8, 1, None, **LAYER)
    initialize(stage, 0)
    _, deeper = stage_forward(Tensor(np.ones((1, 8, 4, 4))), stage)
    assert deeper is None


def test_decoder_upsamples_and_fuses_skip():
    stage = DecoderStage(8, 16, 2, **LAYER)
    initialize(stage, 0)
    out = stage_forward(Tensor(np.ones((1, 16, 4, 4))), stage, skip=Tensor(np.ones((1, 8, 8, 8))))
    assert out.shape == (1, 8, 8, 8)


def test_decoder_requires_matching_skip():
    stage = DecoderStage(8, 16, 1, **LAYER)
    initialize(stage, 0)
    deep = Tensor(np.ones((1, 16, 4, 4)))
    with pytest.raises(UsageError):
        stage(deep)
    with pytest.raises(ShapeError):
        stage(deep, Tensor(np.ones((1, 8, 4, 4))))


def test_stage_macs_match_instrumented_count():
    encoder = EncoderStage(8, 2, 16, **LAYER)
    decoder = DecoderStage(8, 16, 2, **LAYER)
    initialize(encoder, 0)
    initialize(decoder, 0)
    with count_macs() as counter:
        skip, deep = encoder(Tensor(np.ones((1, 8, 8, 8))))
    assert counter.total == encoder.macs((1, 8, 8, 8))
    with count_macs() as counter:
        decoder(deep, skip)
    assert counter.total == decoder.macs((1, 16, 4, 4))
