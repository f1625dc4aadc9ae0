import argparse
import os

import pytest
from pydantic import ValidationError

from canm.cli.config import THREAD_VARIABLES, CliConfig, apply_thread_cap
from canm.errors import UsageError


def _namespace(**values):
    return argparse.Namespace(**{"command": "overfit", **values})


def test_defaults():
    cfg = CliConfig.from_namespace(_namespace())
    assert (cfg.seed, cfg.scale, cfg.steps, cfg.variant, cfg.bits) == (0, 4, 200, "default", 16)
    assert cfg.augment is False


def test_environment_fills_missing_flags(monkeypatch):
    monkeypatch.setenv("CANM_STEPS", "12")
    monkeypatch.setenv("CANM_SEED", "7")
    cfg = CliConfig.from_namespace(_namespace(seed=3, steps=None))
    assert cfg.steps == 12
    assert cfg.seed == 3


def test_bad_environment_value_is_a_validation_error(monkeypatch):
    monkeypatch.setenv("CANM_SCALE", "four")
    with pytest.raises(ValidationError):
        CliConfig.from_namespace(_namespace())


def test_require_lists_every_missing_flag():
    cfg = CliConfig.from_namespace(_namespace(out=None))
    with pytest.raises(UsageError, match="--weights, --out"):
        cfg.require("weights", "out")


def test_thread_cap_sets_blas_variables(monkeypatch):
    for name in THREAD_VARIABLES:
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("MKL_NUM_THREADS", "8")
    assert apply_thread_cap("2") == 2
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"
    assert os.environ["MKL_NUM_THREADS"] == "8"


def test_thread_cap_unset_is_a_no_op(monkeypatch):
    monkeypatch.delenv("CANM_THREADS", raising=False)
    assert apply_thread_cap() is None


@pytest.mark.parametrize("value", ["zero", "0", "-3"])
def test_thread_cap_rejects_bad_values(value):
    with pytest.raises(UsageError):
        apply_thread_cap(value)
