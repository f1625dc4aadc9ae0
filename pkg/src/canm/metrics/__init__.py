"""Loss, image metrics, optimiser, gradient checks, oracles and the overfit harness."""

from canm.metrics.gradcheck import gradcheck, relative_error
from canm.metrics.gradients import run_gradient_suite
from canm.metrics.losses import l1_loss
from canm.metrics.optim import OptimState, adam_step
from canm.metrics.oracles import SUITES, run_oracles
from canm.metrics.quality import psnr, score, score_batch, ssim, ssim_components
from canm.metrics.reports import (
    GradcheckReport,
    ImageMetrics,
    MetricReport,
    OracleEntry,
    OracleReport,
    TrainingReport,
    VerifyReport,
)
from canm.metrics.training import TrainingResult, overfit_train

__all__ = [
    "SUITES",
    "GradcheckReport",
    "ImageMetrics",
    "MetricReport",
    "OptimState",
    "OracleEntry",
    "OracleReport",
    "TrainingReport",
    "TrainingResult",
    "VerifyReport",
    "adam_step",
    "gradcheck",
    "l1_loss",
    "overfit_train",
    "psnr",
    "relative_error",
    "run_gradient_suite",
    "run_oracles",
    "score",
    "score_batch",
    "ssim",
    "ssim_components",
]
