import numpy as np
import pytest

from canm.errors import NumericalError, UsageError
from canm.tensor import Tensor, backward, no_grad, ops, precision, verification


def test_backward_accumulates_through_shared_subexpression():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    y = x * x
    loss = ops.sum(y + y)
    backward(loss)
    np.testing.assert_allclose(x.grad, 4.0 * x.data)


def test_backward_on_untracked_tensor_is_usage_error():
    with pytest.raises(UsageError):
        backward(Tensor(np.ones(1)))


def test_backward_on_non_scalar_is_usage_error():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        backward(x * 2.0)


def test_backward_twice_accumulates_into_leaf():
    x = Tensor(np.array([2.0]), requires_grad=True)
    backward(ops.sum(x * 3.0))
    backward(ops.sum(x * 3.0))
    np.testing.assert_allclose(x.grad, [6.0])


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert y.is_leaf


def test_deep_chain_does_not_recurse():
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    backward(ops.sum(y))
    np.testing.assert_allclose(x.grad, [1.0])


def test_verification_mode_catches_nan():
    x = Tensor(np.array([-1.0]))
    with verification():
        with pytest.raises(NumericalError):
            ops.power(x, 0.5)


def test_verification_mode_catches_division_by_exact_zero():
    with verification():
        with pytest.raises(NumericalError):
            ops.div(Tensor(np.ones(2)), Tensor(np.array([1.0, 0.0])))


def test_precision_selects_dtype():
    with precision(np.float32):
        assert Tensor([1.0, 2.0]).dtype == np.float32
    assert Tensor([1.0, 2.0]).dtype == np.float64


def test_unsupported_precision_rejected():
    with pytest.raises(UsageError):
        with precision(np.int32):
            pass


def test_item_requires_single_element():
    assert Tensor([3.5]).item() == 3.5
    with pytest.raises(UsageError):
        Tensor([1.0, 2.0]).item()
