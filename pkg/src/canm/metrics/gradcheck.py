"""Central finite-difference check of autodiff gradients."""

from __future__ import annotations

import logging
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from canm.errors import GradcheckError, UsageError
from canm.metrics.reports import CoordinateFailure, GradcheckReport
from canm.tensor.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

STEP = 1e-4
FLOOR = 1e-3


def relative_error(analytic: float, numeric: float, floor: float = FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _coordinates(t: Tensor, samples: Optional[int], rng: np.random.Generator) -> list[tuple[int, ...]]:
    if samples is None or t.size <= samples:
        flat = np.arange(t.size)
    else:
        flat = np.sort(rng.choice(t.size, size=samples, replace=False))
    return [tuple(int(i) for i in np.unravel_index(f, t.shape)) for f in flat]


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Mapping[str, Tensor],
    tolerance: float = 1e-6,
    step: float = STEP,
    name: str = "fn",
    samples: Optional[int] = None,
    coordinates: Optional[Mapping[str, Sequence[tuple[int, ...]]]] = None,
    seed: int = 0,
) -> GradcheckReport:
    """Compare d fn / d input from ``backward`` with central differences.

    ``fn`` takes no arguments and closes over ``inputs``; its value must be a
    single-element tensor. Each input is perturbed in place. ``coordinates``
    restricts the check to explicit indices per input, otherwise up to
    ``samples`` coordinates per input are drawn from ``seed``.
    """
    for t in inputs.values():
        t.requires_grad = True
        t.zero_grad()
    value = fn()
    if value.size != 1:
        raise UsageError(f"gradcheck '{name}': function returned shape {value.shape}, expected a scalar")
    backward(value)
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for k, t in inputs.items()}

    def evaluate(key: str, index: tuple[int, ...]) -> float:
        try:
            with no_grad():
                return fn().item()
        except Exception as exc:
            raise GradcheckError(key, index, exc) from exc

    rng = np.random.default_rng(seed)
    failures: list[CoordinateFailure] = []
    worst = 0.0
    checked = 0
    for key, t in inputs.items():
        coords = coordinates[key] if coordinates is not None and key in coordinates else None
        if coordinates is not None and coords is None:
            continue
        for index in coords if coords is not None else _coordinates(t, samples, rng):
            original = t.data[index]
            t.data[index] = original + step
            plus = evaluate(key, index)
            t.data[index] = original - step
            minus = evaluate(key, index)
            t.data[index] = original
            numeric = (plus - minus) / (2.0 * step)
            a = float(analytic[key][index])
            err = relative_error(a, numeric)
            if not np.isfinite(err):
                err = float("inf")
            worst = max(worst, err)
            checked += 1
            if err > tolerance:
                failures.append(
                    CoordinateFailure(tensor=key, index=list(index), analytic=a, numeric=numeric, relative_error=err)
                )

    for t in inputs.values():
        t.zero_grad()
    report = GradcheckReport(
        name=name,
        tolerance=tolerance,
        max_relative_error=worst,
        checked=checked,
        failures=failures,
        passed=not failures,
    )
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"gradcheck {name}: {checked} coordinates, max rel err {worst:.3e} (tol {tolerance:.0e})")
    return report
