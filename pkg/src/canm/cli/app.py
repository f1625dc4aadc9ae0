"""``canm`` command line.

Exit codes: 0 success, 1 a check failed or training diverged, 2 invalid
usage or input.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from canm.cli.config import CliConfig
from canm.data.imageio import encode_png, image_bits, read_image
from canm.data.kspace import kspace_degrade
from canm.data.phantom import export_pair, synth_pair
from canm.data.transforms import MisalignSpec, misalign
from canm.errors import (
    CheckpointError,
    ConfigurationError,
    ImageIOError,
    ShapeError,
    TrainingDivergedError,
    UsageError,
)
from canm.metrics.gradients import run_gradient_suite
from canm.metrics.oracles import DEFAULT_SEEDS, SUITES, run_oracles
from canm.metrics.quality import score_batch
from canm.metrics.reports import TrainingReport, VerifyReport, loss_curve_csv, metrics_table, verify_table
from canm.metrics.training import overfit_train, predict
from canm.network.checkpoint import load_weights, save_weights
from canm.network.configuration import VARIANTS, NetworkConfig, TrainingConfig
from canm.network.model import Network, build, build_variant, count_params_flops
from canm.tensor.io import encode_tensor
from canm.tensor.tensor import Tensor, no_grad
from canm.utils.fs import atomic_write_bytes, atomic_write_text, staged_directory
from canm.utils.preset_loader import list_presets

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVELS = ["debug", "info", "warning", "error", "critical"]


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper()), format=LOG_FORMAT, force=True)


# -- shared helpers ----------------------------------------------------------


def load_network_config(cfg: CliConfig) -> NetworkConfig:
    if cfg.config is not None:
        try:
            text = cfg.config.read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"Cannot read config {cfg.config}: {e}") from e
        config = NetworkConfig.model_validate_json(text)
    else:
        config = NetworkConfig.from_preset(cfg.preset or "default")
    return config.validate_invariants()


def load_network(cfg: CliConfig) -> Network:
    cfg.require("weights")
    net = build(load_network_config(cfg), cfg.seed)
    load_weights(net, cfg.weights)
    return net


def _image_meta(**fields) -> str:
    return json.dumps(fields, indent=2, sort_keys=True)


# -- subcommands ---------------------------------------------------------------


def cmd_degrade(cfg: CliConfig) -> int:
    cfg.require("input", "out")
    img = read_image(cfg.input)
    lr_small, lr_interp = kspace_degrade(img, cfg.scale)
    with staged_directory(cfg.out) as staging:
        (staging / "lr_small.png").write_bytes(encode_png(lr_small, cfg.bits))
        (staging / "lr_interp.png").write_bytes(encode_png(lr_interp, cfg.bits))
        (staging / "meta.json").write_text(
            _image_meta(
                source=cfg.input.name,
                scale=cfg.scale,
                size=list(img.shape),
                lr_size=list(lr_small.shape),
                bits=cfg.bits,
            ),
            encoding="utf-8",
        )
    logger.info(f"degraded {cfg.input} x{cfg.scale}: {img.shape} -> {lr_small.shape}")
    return EXIT_OK


def cmd_forward(cfg: CliConfig) -> int:
    cfg.require("weights", "ref", "lr", "out")
    ref, lr = read_image(cfg.ref), read_image(cfg.lr)
    net = load_network(cfg)
    sr = predict(net, ref, lr)
    bits = cfg.bits if "bits" in cfg.model_fields_set else image_bits(cfg.lr)
    payload = encode_png(sr, bits)
    if cfg.target is not None:
        target = read_image(cfg.target)
        if target.shape != sr.shape:
            raise ShapeError(f"target {target.shape} does not match output {sr.shape}")
        print(metrics_table(score_batch(sr, target, prefix="sr")), end="")
    atomic_write_bytes(cfg.out, payload)
    logger.info(f"wrote {cfg.out}")
    return EXIT_OK


def cmd_verify(cfg: CliConfig) -> int:
    if cfg.suite not in ("grad", "oracle", "all"):
        raise UsageError(f"--suite must be grad, oracle or all, got '{cfg.suite}'")
    suites = ["grad", "oracle"] if cfg.suite == "all" else [cfg.suite]
    gradients = run_gradient_suite(tolerance=cfg.tol, seed=cfg.seed) if "grad" in suites else []
    oracles = run_oracles(SUITES, DEFAULT_SEEDS).entries if "oracle" in suites else []
    passed = all(g.passed for g in gradients) and all(e.passed for e in oracles)
    report = VerifyReport(suites=suites, passed=passed, gradients=gradients, oracles=oracles)
    print(verify_table(report), end="")
    for g in gradients:
        if not g.passed:
            print(f"FAILED gradient check '{g.name}': {len(g.failures)} coordinate(s), max rel err {g.max_relative_error:.3e}")
    for e in oracles:
        if not e.passed:
            print(f"FAILED oracle {e.suite}/{e.case} seed {e.seed}: max diff {e.max_abs_diff:.3e}")
    if cfg.report is not None:
        atomic_write_text(cfg.report, report.to_json())
    logger.info(f"verify {'+'.join(suites)}: {'passed' if passed else 'FAILED'}")
    return EXIT_OK if passed else EXIT_FAILED


def render_loss_plot(losses: Sequence[float]) -> bytes:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses)
    ax.set_xlabel("step")
    ax.set_ylabel("L1 loss")
    ax.set_title("overfit loss")
    ax.grid(True, alpha=0.3)
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", metadata={"Software": None})
    plt.close(fig)
    return buffer.getvalue()


def cmd_overfit(cfg: CliConfig) -> int:
    cfg.require("out")
    if cfg.variant not in VARIANTS:
        raise UsageError(f"Unknown variant '{cfg.variant}'. Available: {list(VARIANTS)}")
    spec = MisalignSpec.parse(cfg.misalign) if cfg.misalign else None
    config = load_network_config(cfg).with_variant(cfg.variant)
    config.validate_invariants()
    H, W = config.input_size
    pair = synth_pair(cfg.seed, H, W, cfg.scale)
    if spec is not None:
        pair = dataclasses.replace(pair, ref=misalign(pair.ref, spec))
    net = build(config, cfg.seed)
    training = TrainingConfig.for_overfit()
    try:
        result = overfit_train(net, pair, cfg.steps, cfg.seed, training, augment=cfg.augment)
    except TrainingDivergedError as e:
        logger.error(f"overfit diverged at step {e.step}")
        print(f"training diverged at step {e.step} (loss={e.loss})")
        return EXIT_FAILED
    report = TrainingReport(
        variant=config.variant,
        seed=cfg.seed,
        steps=cfg.steps,
        scale=cfg.scale,
        misalign=cfg.misalign,
        initial_loss=result.initial_loss,
        final_loss=result.final_loss,
        baseline=result.baseline,
        final=result.final,
        config_hash=config.config_hash(),
    )
    with staged_directory(cfg.out) as staging:
        (staging / "loss.csv").write_text(loss_curve_csv(result.losses), encoding="utf-8")
        (staging / "report.json").write_text(report.to_json(), encoding="utf-8")
        (staging / "before.png").write_bytes(encode_png(pair.lr_interp, cfg.bits))
        (staging / "after.png").write_bytes(encode_png(result.output, cfg.bits))
        (staging / "loss.png").write_bytes(render_loss_plot(result.losses))
    print(metrics_table(result.baseline) + metrics_table(result.final), end="")
    return EXIT_OK


def offset_gray_levels(offsets: np.ndarray, candidates: int) -> np.ndarray:
    """Offset index j of J candidates -> round(j * 255 / (J - 1)) as [0, 1] gray."""
    if candidates <= 1:
        return np.zeros(offsets.shape)
    return np.rint(offsets * 255.0 / (candidates - 1)) / 255.0


def cmd_matchviz(cfg: CliConfig) -> int:
    cfg.require("weights", "ref", "lr", "out", "level")
    if cfg.level not in (1, 2, 3):
        raise UsageError(f"--level must be 1, 2 or 3, got {cfg.level}")
    ref, lr = read_image(cfg.ref), read_image(cfg.lr)
    net = load_network(cfg)
    if net.matching == "none":
        raise UsageError(f"variant '{net.variant}' has no feature matching to visualise")
    matches: dict = {}
    with no_grad():
        net(Tensor(ref[None, None]), Tensor(lr[None, None]), matches)
    result = matches[cfg.level]
    candidates = result.offsets[0] * result.offsets[1]
    offsets = result.argmax_offsets()[0]
    centre = candidates // 2
    with staged_directory(cfg.out) as staging:
        (staging / "attention.canm").write_bytes(encode_tensor(result.attention))
        (staging / "similarity.canm").write_bytes(encode_tensor(result.similarity))
        (staging / "offsets.png").write_bytes(encode_png(offset_gray_levels(offsets, candidates), 8))
        (staging / "meta.json").write_text(
            _image_meta(
                level=cfg.level,
                grid=list(result.grid),
                candidates=list(result.offsets),
                evaluations=result.evaluations,
                centre_fraction=float(np.mean(offsets == centre)),
            ),
            encoding="utf-8",
        )
    logger.info(f"matchviz level {cfg.level}: grid {result.grid}, {candidates} candidates per patch")
    return EXIT_OK


def cmd_init(cfg: CliConfig) -> int:
    cfg.require("out")
    net = build_variant(load_network_config(cfg), cfg.variant, cfg.seed)
    save_weights(net, cfg.out)
    atomic_write_text(cfg.out / "config.json", net.config.model_dump_json(indent=2))
    return EXIT_OK


def cmd_synth(cfg: CliConfig) -> int:
    cfg.require("out")
    if cfg.size is None:
        H, W = load_network_config(cfg).input_size
    else:
        H = W = cfg.size
    export_pair(synth_pair(cfg.seed, H, W, cfg.scale), cfg.out, bits=cfg.bits)
    logger.info(f"exported synthetic pair seed={cfg.seed} {H}x{W} x{cfg.scale} to {cfg.out}")
    return EXIT_OK


def cmd_params(cfg: CliConfig) -> int:
    config = load_network_config(cfg).with_variant(cfg.variant)
    net = Network(config.validate_invariants())
    params, macs = count_params_flops(net)
    name = cfg.preset or (cfg.config.name if cfg.config else "default")
    print(f"{name} [{config.variant}] input {config.input_size[0]}x{config.input_size[1]}: "
          f"{params} parameters, {macs} MACs ({macs / 1e9:.3f} G)")
    return EXIT_OK


COMMANDS: dict[str, Callable[[CliConfig], int]] = {
    "degrade": cmd_degrade,
    "forward": cmd_forward,
    "verify": cmd_verify,
    "overfit": cmd_overfit,
    "matchviz": cmd_matchviz,
    "init": cmd_init,
    "synth": cmd_synth,
    "params": cmd_params,
}


# -- argument parsing ----------------------------------------------------------


def _network_flags(parser: argparse.ArgumentParser, variant: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="NetworkConfig JSON file")
    parser.add_argument("--preset", type=str, help=f"Named preset when --config is absent ({', '.join(list_presets())})")
    if variant:
        parser.add_argument("--variant", type=str, choices=list(VARIANTS), help="Ablation variant (default: default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canm", description="Multi-contrast MRI super-resolution toolkit")
    parser.add_argument(
        "--log-level",
        type=str,
        choices=LOG_LEVELS,
        help="Log level (default: CANM_LOG_LEVEL or info)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="Simulate a low-resolution acquisition by k-space cropping")
    p.add_argument("--in", dest="input", type=Path, help="Grayscale PNG in [0, 1]")
    p.add_argument("--scale", type=int, choices=[2, 4], help="Downsampling factor (default: 4)")
    p.add_argument("--out", type=Path, help="Output directory")
    p.add_argument("--bits", type=int, choices=[8, 16], help="PNG bit depth (default: 16)")

    p = sub.add_parser("forward", help="Super-resolve one image pair with saved weights")
    _network_flags(p)
    p.add_argument("--weights", type=Path, help="Checkpoint directory")
    p.add_argument("--ref", type=Path, help="Reference-contrast PNG")
    p.add_argument("--lr", type=Path, help="Zero-filled LR PNG")
    p.add_argument("--target", type=Path, help="Optional HR target; prints PSNR/SSIM")
    p.add_argument("--out", type=Path, help="Output PNG")
    p.add_argument("--seed", type=int, help="Seed (default: 0)")
    p.add_argument("--bits", type=int, choices=[8, 16], help="PNG bit depth (default: that of --lr)")

    p = sub.add_parser("verify", help="Run gradient checks and brute-force oracles")
    p.add_argument("--suite", type=str, choices=["grad", "oracle", "all"], help="Which checks (default: all)")
    p.add_argument("--tol", type=float, help="Block gradient tolerance (default: 1e-6; network uses 10x)")
    p.add_argument("--seed", type=int, help="Seed (default: 0)")
    p.add_argument("--report", type=Path, help="Write the JSON report here")

    p = sub.add_parser("overfit", help="Train on one synthetic pair and report before/after metrics")
    _network_flags(p, variant=True)
    p.add_argument("--seed", type=int, help="Seed for data, weights and augmentation (default: 0)")
    p.add_argument("--steps", type=int, help="Optimisation steps (default: 200)")
    p.add_argument("--scale", type=int, choices=[2, 4], help="Downsampling factor (default: 4)")
    p.add_argument("--misalign", type=str, help="Perturb the reference by 'tx,ty,deg'")
    p.add_argument("--augment", action="store_true", default=None, help="Random flips each step")
    p.add_argument("--out", type=Path, help="Output directory")
    p.add_argument("--bits", type=int, choices=[8, 16], help="PNG bit depth (default: 16)")

    p = sub.add_parser("matchviz", help="Dump matching attention and render the argmax-offset map")
    _network_flags(p)
    p.add_argument("--weights", type=Path, help="Checkpoint directory")
    p.add_argument("--ref", type=Path, help="Reference-contrast PNG")
    p.add_argument("--lr", type=Path, help="Zero-filled LR PNG")
    p.add_argument("--level", type=int, choices=[1, 2, 3], help="Matching level")
    p.add_argument("--out", type=Path, help="Output directory")
    p.add_argument("--seed", type=int, help="Seed (default: 0)")

    p = sub.add_parser("init", help="Build a network and save freshly initialised weights")
    _network_flags(p, variant=True)
    p.add_argument("--seed", type=int, help="Seed (default: 0)")
    p.add_argument("--out", type=Path, help="Checkpoint directory")

    p = sub.add_parser("synth", help="Export a synthetic two-contrast phantom pair")
    _network_flags(p)
    p.add_argument("--seed", type=int, help="Seed (default: 0)")
    p.add_argument("--size", type=int, help="Square image size (default: preset input size)")
    p.add_argument("--scale", type=int, choices=[2, 4], help="Downsampling factor (default: 4)")
    p.add_argument("--out", type=Path, help="Output directory")
    p.add_argument("--bits", type=int, choices=[8, 16], help="PNG bit depth (default: 16)")

    p = sub.add_parser("params", help="Print parameter count and multiply-accumulates")
    _network_flags(p, variant=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = CliConfig.from_namespace(args)
    except ValidationError as e:
        print(f"canm: invalid options: {e}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(cfg.log_level)
    logger.info(f"canm {cfg.command} started")
    try:
        code = COMMANDS[cfg.command](cfg)
    except (UsageError, ShapeError, ConfigurationError, ImageIOError, CheckpointError, ValidationError) as e:
        logger.error(f"{cfg.command}: {e}")
        print(f"canm {cfg.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    logger.info(f"canm {cfg.command} finished with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
