"""Single-pair overfit harness: Adam on L1 at batch size 1."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from canm.data.phantom import ImagePair
from canm.errors import ShapeError, TrainingDivergedError
from canm.metrics.losses import l1_loss
from canm.metrics.optim import OptimState, adam_step
from canm.metrics.quality import score_batch
from canm.metrics.reports import MetricReport
from canm.network.configuration import OVERFIT_LEARNING_RATE, TrainingConfig
from canm.network.model import Network
from canm.tensor.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class TrainingResult:
    losses: list[float]
    final_loss: float
    baseline: MetricReport
    final: MetricReport
    output: np.ndarray = field(repr=False)

    @property
    def initial_loss(self) -> Optional[float]:
        return self.losses[0] if self.losses else None


def _batch(img: np.ndarray) -> Tensor:
    return Tensor(img[None, None])


def _flip(arrays: tuple[np.ndarray, ...], rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    axes = [ax for ax in (0, 1) if rng.random() < 0.5]
    if not axes:
        return arrays
    return tuple(np.ascontiguousarray(np.flip(a, axis=axes)) for a in arrays)


def predict(net: Network, ref: np.ndarray, lr_interp: np.ndarray) -> np.ndarray:
    with no_grad():
        return net(_batch(ref), _batch(lr_interp)).data[0, 0]


def overfit_train(
    net: Network,
    pair: ImagePair,
    steps: int,
    seed: int = 0,
    config: Optional[TrainingConfig] = None,
    augment: bool = False,
) -> TrainingResult:
    """Fit ``net`` to one pair. ``losses[i]`` is the loss evaluated before
    update i, so ``losses[0]`` is the loss of the untrained network. Without
    ``config`` the base lr is ``OVERFIT_LEARNING_RATE``."""
    config = config or TrainingConfig(learning_rate=OVERFIT_LEARNING_RATE)
    if pair.ref.shape != tuple(net.input_size):
        raise ShapeError(f"pair resolution {pair.ref.shape} does not match network input {tuple(net.input_size)}")
    rng = np.random.default_rng(seed)
    state = OptimState.from_config(config)
    params = list(net.named_parameters())
    losses: list[float] = []

    for step in range(steps):
        ref, lr, hr = pair.ref, pair.lr_interp, pair.hr_target
        if augment:
            ref, lr, hr = _flip((ref, lr, hr), rng)
        epoch = step // config.decay_every_steps
        if epoch != state.epoch:
            state.epoch = epoch
            logger.info(f"step {step}: learning rate decayed to {state.effective_lr:.3e}")
        net.zero_grad()
        loss = l1_loss(net(_batch(ref), _batch(lr)), _batch(hr))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(step, value)
        losses.append(value)
        loss.backward()
        adam_step(params, state)
        if step % config.log_every == 0 or step == steps - 1:
            logger.info(f"step {step}/{steps}: loss {value:.6f}")

    net.zero_grad()
    output = predict(net, pair.ref, pair.lr_interp)
    final_loss = float(np.mean(np.abs(output - pair.hr_target)))
    if not math.isfinite(final_loss):
        raise TrainingDivergedError(steps, final_loss)
    baseline = score_batch(pair.lr_interp, pair.hr_target, prefix="baseline")
    final = score_batch(output, pair.hr_target, prefix="output")
    logger.info(
        f"overfit done: loss {losses[0] if losses else final_loss:.6f} -> {final_loss:.6f}, "
        f"PSNR {baseline.psnr.mean:.3f} -> {final.psnr.mean:.3f} dB"
    )
    return TrainingResult(losses=losses, final_loss=final_loss, baseline=baseline, final=final, output=output)
