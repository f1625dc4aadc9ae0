import pytest

import canm.matching.nbfm
from canm.errors import UsageError
from canm.metrics import run_gradient_suite
from canm.metrics.gradients import CASES, network_case
from canm.tensor import Tensor


def test_every_block_gradient_matches_finite_differences():
    reports = run_gradient_suite(include_network=False)
    assert [r.name for r in reports] == list(CASES)
    failed = {r.name: r.max_relative_error for r in reports if not r.passed}
    assert not failed
    assert all(r.checked > 0 for r in reports)


def test_detached_gate_weight_is_caught(monkeypatch):
    monkeypatch.setattr(canm.matching.nbfm, "_gate", lambda s, w: s * Tensor(w.data))
    (report,) = run_gradient_suite(cases=["nbfm"], include_network=False)
    assert not report.passed
    assert {f.tensor for f in report.failures} == {"weight"}


def test_tolerance_override_is_reported():
    (report,) = run_gradient_suite(cases=["matmul"], tolerance=1e-4, include_network=False)
    assert report.tolerance == 1e-4
    assert report.passed


def test_unknown_case():
    with pytest.raises(UsageError):
        run_gradient_suite(cases=["lstm"])


def test_network_case_samples_parameter_coordinates():
    _, params, coordinates = network_case(0)
    assert sum(len(v) for v in coordinates.values()) == 16
    for name, indices in coordinates.items():
        for index in indices:
            assert len(index) == params[name].ndim


@pytest.mark.slow
def test_network_gradient_matches_finite_differences():
    reports = run_gradient_suite(cases=[], include_network=True)
    assert [r.name for r in reports] == ["network"]
    assert reports[0].passed, reports[0].failures


def test_deep_blocks_pass_at_the_default_step_and_tolerance():
    reports = run_gradient_suite(cases=["ctl", "cab_full"], include_network=False)
    for report in reports:
        assert report.tolerance == 1e-6
        assert report.max_relative_error < 1e-6, (report.name, report.max_relative_error)
