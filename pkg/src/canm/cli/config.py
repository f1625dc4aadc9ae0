"""Command-line settings: flags first, then CANM_<FIELD> environment variables,
then field defaults."""

from __future__ import annotations

import argparse
import os
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field

from canm.errors import UsageError

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_thread_cap(threads: Optional[str] = None) -> Optional[int]:
    """Cap BLAS threads from CANM_THREADS; only effective before numpy loads."""
    value = threads if threads is not None else os.environ.get("CANM_THREADS")
    if not value:
        return None
    try:
        count = int(value)
    except ValueError:
        raise UsageError(f"CANM_THREADS must be an integer, got {value!r}") from None
    if count <= 0:
        raise UsageError(f"CANM_THREADS must be positive, got {value}")
    for name in THREAD_VARIABLES:
        os.environ.setdefault(name, str(count))
    return count


class CliConfig(BaseModel):
    command: str = Field(..., description="Subcommand name")
    config: Optional[Path] = Field(
        default=None,
        metadata={"description": "NetworkConfig JSON file."},
    )
    preset: Optional[str] = Field(
        default=None,
        metadata={"description": "Named preset used when no config file is given."},
    )
    weights: Optional[Path] = Field(default=None, metadata={"description": "Checkpoint directory."})
    input: Optional[Path] = Field(default=None, metadata={"description": "Input image (degrade)."})
    ref: Optional[Path] = Field(default=None, metadata={"description": "Reference-contrast image."})
    lr: Optional[Path] = Field(default=None, metadata={"description": "Zero-filled LR image."})
    target: Optional[Path] = Field(default=None, metadata={"description": "Optional HR target for scoring."})
    out: Optional[Path] = Field(default=None, metadata={"description": "Output file or directory."})
    seed: int = Field(default=0, metadata={"description": "Single source of randomness."})
    scale: int = Field(default=4, metadata={"description": "k-space downsampling factor (2 or 4)."})
    size: Optional[int] = Field(default=None, metadata={"description": "Square phantom size for synth."})
    variant: str = Field(default="default", metadata={"description": "Ablation variant."})
    steps: int = Field(default=200, metadata={"description": "Overfit steps."})
    suite: str = Field(default="all", metadata={"description": "Verification suite: grad, oracle or all."})
    tol: Optional[float] = Field(default=None, metadata={"description": "Gradient tolerance override."})
    level: Optional[int] = Field(default=None, metadata={"description": "Matching level 1-3 for matchviz."})
    misalign: Optional[str] = Field(default=None, metadata={"description": "Reference perturbation tx,ty,deg."})
    augment: bool = Field(default=False, metadata={"description": "Random flips during overfit."})
    bits: int = Field(default=16, metadata={"description": "PNG bit depth for written images."})
    report: Optional[Path] = Field(default=None, metadata={"description": "Write the verify report JSON here."})
    log_level: str = Field(default="info", metadata={"description": "Logging level."})

    @classmethod
    def from_namespace(cls, namespace: argparse.Namespace) -> "CliConfig":
        """Values given on the command line win over CANM_<FIELD> variables."""
        flags = vars(namespace)
        raw_values: dict[str, Any] = {
            name: flags.get(name) if flags.get(name) is not None else os.environ.get(f"CANM_{name.upper()}")
            for name in cls.model_fields.keys()
        }
        values = {k: v for k, v in raw_values.items() if v is not None}
        return cls(**values)

    def require(self, *names: str) -> None:
        missing = [f"--{n.replace('_', '-')}" for n in names if getattr(self, n) is None]
        if missing:
            raise UsageError(f"{self.command}: missing required option(s) {', '.join(missing)}")
