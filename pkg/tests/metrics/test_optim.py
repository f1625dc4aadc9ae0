import numpy as np
import pytest

from canm.errors import UsageError
from canm.metrics import OptimState, adam_step
from canm.network import TrainingConfig
from canm.tensor import Parameter


def _param(values, grad):
    p = Parameter((len(values),))
    p.data = np.array(values, dtype=float)
    p.grad = np.array(grad, dtype=float)
    return p


def test_first_step_moves_by_learning_rate_against_gradient():
    p = _param([1.0, 1.0, 1.0], [0.5, -2.0, 1e-3])
    state = OptimState(learning_rate=0.01)
    adam_step([("p", p)], state)
    np.testing.assert_allclose(p.data, [0.99, 1.01, 0.99], atol=1e-6)
    assert state.step == 1


def test_zero_gradient_leaves_parameter():
    p = _param([2.0], [0.0])
    adam_step([("p", p)], OptimState())
    assert p.data[0] == 2.0


def test_missing_gradient_is_rejected_before_any_update():
    good = _param([1.0], [1.0])
    bad = Parameter((1,))
    state = OptimState()
    with pytest.raises(UsageError, match="bad"):
        adam_step([("good", good), ("bad", bad)], state)
    assert good.data[0] == 1.0
    assert state.step == 0


def test_effective_learning_rate_decays_per_epoch():
    state = OptimState.from_config(TrainingConfig(learning_rate=0.1, lr_decay=0.5))
    assert state.effective_lr == 0.1
    state.epoch = 3
    assert state.effective_lr == pytest.approx(0.0125)


def test_moments_accumulate():
    p = _param([0.0], [1.0])
    state = OptimState(learning_rate=0.1)
    adam_step([("p", p)], state)
    adam_step([("p", p)], state)
    assert state.m["p"][0] == pytest.approx(0.19)
    # constant gradient keeps the bias-corrected step at lr
    np.testing.assert_allclose(p.data, [-0.2], atol=1e-6)
