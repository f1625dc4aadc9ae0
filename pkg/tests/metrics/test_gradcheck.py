import numpy as np
import pytest

from canm.errors import GradcheckError, UsageError
from canm.metrics import gradcheck, relative_error
from canm.tensor import Tensor, ops
from canm.tensor.tensor import make_result


def test_relative_error_floor():
    assert relative_error(2.0, 1.0) == 0.5
    assert relative_error(0.0, 1e-6) == pytest.approx(1e-3)


def test_correct_gradient_passes():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 4)))
    w = Tensor(rng.standard_normal((4, 2)))
    report = gradcheck(lambda: ops.sum(ops.gelu(x @ w)), {"x": x, "w": w}, name="gelu-matmul")
    assert report.passed
    assert report.checked == 12 + 8
    assert report.max_relative_error < 1e-6
    assert x.grad is None


def test_wrong_adjoint_is_detected():
    def bad_square(t):
        return make_result(t.data**2, (t,), lambda g: (g * t.data,), "bad_square")

    x = Tensor(np.array([0.5, -1.5, 2.0]))
    report = gradcheck(lambda: ops.sum(bad_square(x)), {"x": x})
    assert not report.passed
    assert len(report.failures) == 3
    failure = report.failures[1]
    assert failure.tensor == "x" and failure.index == [1]
    assert failure.analytic == pytest.approx(-1.5)
    assert failure.numeric == pytest.approx(-3.0)


def test_sampling_and_explicit_coordinates():
    x = Tensor(np.random.default_rng(1).standard_normal(50))
    y = Tensor(np.ones(3))
    fn = lambda: ops.sum(x * x) + ops.sum(y)  # noqa: E731
    assert gradcheck(fn, {"x": x, "y": y}, samples=5).checked == 5 + 3
    assert gradcheck(fn, {"x": x, "y": y}, coordinates={"x": [(0,), (7,)]}).checked == 2


def test_non_scalar_function_is_rejected():
    x = Tensor(np.ones(2))
    with pytest.raises(UsageError):
        gradcheck(lambda: x * 2.0, {"x": x})


def test_function_raising_under_perturbation_names_the_coordinate():
    x = Tensor(np.array([1.0, 0.0]))

    def fn():
        if x.data[1] < 0:
            raise ValueError("negative")
        return ops.sum(x * x)

    with pytest.raises(GradcheckError) as info:
        gradcheck(fn, {"x": x})
    assert info.value.name == "x"
    assert info.value.index == (1,)
