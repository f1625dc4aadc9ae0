import logging

import numpy as np
import pytest

import canm.metrics.training
from canm.data import synth_pair
from canm.errors import ShapeError, TrainingDivergedError
from canm.metrics import overfit_train
from canm.metrics.training import predict
from canm.network import OVERFIT_LEARNING_RATE, VARIANTS, NetworkConfig, TrainingConfig, build, build_variant
from canm.tensor import ops


def _micro(seed=0):
    return build(NetworkConfig.from_preset("micro"), seed)


def test_zero_steps_reports_the_untrained_network():
    pair = synth_pair(0, 16, 16, 4)
    result = overfit_train(_micro(), pair, steps=0)
    assert result.losses == []
    assert result.initial_loss is None
    np.testing.assert_array_equal(result.output, pair.lr_interp)
    assert result.final_loss == pytest.approx(float(np.mean(np.abs(pair.lr_interp - pair.hr_target))))
    assert result.final.l1.mean == pytest.approx(result.baseline.l1.mean)


def test_loss_decreases_on_a_single_pair():
    pair = synth_pair(1, 16, 16, 4)
    net = _micro(1)
    result = overfit_train(net, pair, steps=8, config=TrainingConfig(learning_rate=1e-3, log_every=4))
    assert len(result.losses) == 8
    assert result.final_loss < result.initial_loss
    np.testing.assert_array_equal(result.output, predict(net, pair.ref, pair.lr_interp))


def test_learning_rate_decay_is_logged(caplog):
    pair = synth_pair(2, 16, 16, 4)
    with caplog.at_level(logging.INFO, logger="canm.metrics.training"):
        overfit_train(_micro(), pair, steps=3, config=TrainingConfig(decay_every_steps=2))
    assert any("learning rate decayed" in r.getMessage() for r in caplog.records)


def test_augmented_run_is_reproducible():
    pair = synth_pair(3, 16, 16, 4)
    a = overfit_train(_micro(), pair, steps=3, seed=5, augment=True)
    b = overfit_train(_micro(), pair, steps=3, seed=5, augment=True)
    assert a.losses == b.losses


def test_pair_must_match_network_size():
    with pytest.raises(ShapeError):
        overfit_train(_micro(), synth_pair(0, 32, 32, 4), steps=1)


def test_non_finite_loss_stops_training(monkeypatch):
    monkeypatch.setattr(canm.metrics.training, "l1_loss", lambda y, t: ops.mean(ops.absolute(y - t)) * float("nan"))
    with pytest.raises(TrainingDivergedError) as info:
        overfit_train(_micro(), synth_pair(0, 16, 16, 4), steps=2)
    assert info.value.step == 0


def test_first_loss_is_the_zero_filled_l1():
    pair = synth_pair(4, 16, 16, 4)
    result = overfit_train(_micro(4), pair, steps=1)
    expected = float(np.mean(np.abs(pair.lr_interp - pair.hr_target)))
    assert abs(result.losses[0] - expected) < 1e-12


def test_default_config_uses_the_overfit_learning_rate():
    pair = synth_pair(0, 16, 16, 4)
    implicit = overfit_train(_micro(), pair, steps=3)
    explicit = overfit_train(_micro(), pair, steps=3, config=TrainingConfig(learning_rate=OVERFIT_LEARNING_RATE))
    slow = overfit_train(_micro(), pair, steps=3, config=TrainingConfig())
    assert implicit.losses == explicit.losses
    assert implicit.losses != slow.losses


@pytest.mark.slow
def test_desk_overfit_beats_the_zero_filled_baseline():
    pair = synth_pair(1, 64, 64, 4)
    result = overfit_train(build(NetworkConfig.from_preset("desk"), 1), pair, steps=200, seed=1)
    assert result.final_loss < 0.5 * result.losses[0]
    assert result.final.psnr.mean >= result.baseline.psnr.mean + 1.0


@pytest.mark.slow
@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_trains_fifty_desk_steps(variant):
    pair = synth_pair(1, 64, 64, 4)
    net = build_variant(NetworkConfig.from_preset("desk"), variant, 1)
    result = overfit_train(net, pair, steps=50, seed=1)
    assert len(result.losses) == 50
    assert np.isfinite(result.final_loss)
