import numpy as np
import pytest
from pydantic import ValidationError

from canm.data import MisalignSpec, denormalize, misalign, normalize
from canm.errors import UsageError


def test_normalize_and_invert():
    img = np.array([[2.0, 4.0], [6.0, 10.0]])
    out, record = normalize(img)
    assert out.min() == 0.0 and out.max() == 1.0
    assert (record.minimum, record.maximum) == (2.0, 10.0)
    np.testing.assert_allclose(denormalize(out, record), img)


def test_constant_image_normalises_to_zero():
    out, record = normalize(np.full((3, 3), 7.0))
    np.testing.assert_array_equal(out, 0.0)
    assert record.minimum == record.maximum == 7.0


def test_parse_misalignment():
    spec = MisalignSpec.parse(" 1.5, -2,0.5 ")
    assert (spec.tx, spec.ty, spec.theta) == (1.5, -2.0, 0.5)
    with pytest.raises(UsageError):
        MisalignSpec.parse("1,2")
    with pytest.raises(UsageError):
        MisalignSpec.parse("a,b,c")
    with pytest.raises(ValidationError):
        MisalignSpec.parse("5,0,0")


def test_sampled_misalignment_is_in_range():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = MisalignSpec.sample(rng)
        assert abs(spec.tx) <= 4 and abs(spec.ty) <= 4 and abs(spec.theta) <= 3


def test_identity_returns_a_copy():
    img = np.random.default_rng(0).uniform(size=(8, 8))
    out = misalign(img, MisalignSpec())
    np.testing.assert_array_equal(out, img)
    assert out is not img


def test_integer_translation_moves_content():
    img = np.random.default_rng(1).uniform(size=(10, 12))
    out = misalign(img, MisalignSpec(tx=2.0, ty=1.0))
    np.testing.assert_allclose(out[1:, 2:], img[:-1, :-2], atol=1e-12)
    # edge fill repeats the border
    np.testing.assert_allclose(out[0, 2:], img[0, :-2], atol=1e-12)


def test_rotation_keeps_centre_pixel():
    img = np.zeros((9, 9))
    img[4, 4] = 1.0
    out = misalign(img, MisalignSpec(theta=3.0))
    assert out[4, 4] == pytest.approx(1.0, abs=1e-12)
