"""Report schemas and their JSON / text / CSV renderings."""

from __future__ import annotations

import csv
import io
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ReportModel(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class ImageMetrics(ReportModel):
    name: str = Field(description="Which image of the batch (or which output) was scored.")
    psnr: float = Field(description="Peak signal-to-noise ratio in dB; inf for identical images.")
    ssim: float = Field(description="Single-scale SSIM.")
    l1: float = Field(description="Mean absolute error.")


class Aggregate(ReportModel):
    mean: float
    std: float
    minimum: float
    maximum: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Aggregate":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            return cls(mean=math.nan, std=math.nan, minimum=math.nan, maximum=math.nan)
        lo, hi = float(arr.min()), float(arr.max())
        if lo == hi:
            # also covers a batch of identical images scored at +inf dB
            return cls(mean=lo, std=0.0, minimum=lo, maximum=hi)
        return cls(mean=float(np.mean(arr)), std=float(np.std(arr)), minimum=lo, maximum=hi)


class MetricReport(ReportModel):
    per_image: List[ImageMetrics] = Field(default_factory=list)
    psnr: Optional[Aggregate] = None
    ssim: Optional[Aggregate] = None
    l1: Optional[Aggregate] = None

    @classmethod
    def from_images(cls, images: Sequence[ImageMetrics]) -> "MetricReport":
        images = list(images)
        return cls(
            per_image=images,
            psnr=Aggregate.of([m.psnr for m in images]),
            ssim=Aggregate.of([m.ssim for m in images]),
            l1=Aggregate.of([m.l1 for m in images]),
        )


class CoordinateFailure(ReportModel):
    tensor: str
    index: List[int]
    analytic: float
    numeric: float
    relative_error: float


class GradcheckReport(ReportModel):
    name: str
    tolerance: float
    max_relative_error: float
    checked: int
    failures: List[CoordinateFailure] = Field(default_factory=list)
    passed: bool


class OracleEntry(ReportModel):
    suite: str
    case: str
    seed: int
    max_abs_diff: float
    tolerance: float
    passed: bool


class OracleReport(ReportModel):
    entries: List[OracleEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def max_diff(self, suite: str) -> float:
        diffs = [e.max_abs_diff for e in self.entries if e.suite == suite]
        return max(diffs) if diffs else 0.0


class VerifyReport(ReportModel):
    suites: List[str]
    passed: bool
    gradients: List[GradcheckReport] = Field(default_factory=list)
    oracles: List[OracleEntry] = Field(default_factory=list)


class TrainingReport(ReportModel):
    variant: str
    seed: int
    steps: int
    scale: int
    misalign: Optional[str] = None
    initial_loss: Optional[float] = None
    final_loss: float
    baseline: MetricReport
    final: MetricReport
    config_hash: str


def render_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Aligned columns; floats printed with 6 significant digits."""

    def fmt(value: object) -> str:
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    cells = [[fmt(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def verify_table(report: VerifyReport) -> str:
    rows: list[list[object]] = []
    for g in report.gradients:
        rows.append(["grad", g.name, g.max_relative_error, g.tolerance, "ok" if g.passed else "FAIL"])
    for e in report.oracles:
        rows.append([f"oracle/{e.suite}", f"{e.case}@{e.seed}", e.max_abs_diff, e.tolerance, "ok" if e.passed else "FAIL"])
    return render_table(["suite", "case", "max error", "tolerance", "status"], rows)


def metrics_table(report: MetricReport) -> str:
    rows = [[m.name, m.psnr, m.ssim, m.l1] for m in report.per_image]
    return render_table(["image", "psnr", "ssim", "l1"], rows)


def loss_curve_csv(losses: Sequence[float]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["step", "loss"])
    for step, loss in enumerate(losses):
        writer.writerow([step, repr(float(loss))])
    return buffer.getvalue()
