"""Weight checkpoints: one tensor file per parameter plus manifest.json."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from canm.errors import CheckpointError
from canm.network.model import Network
from canm.tensor.io import encode_tensor, load_tensor
from canm.utils.fs import staged_directory

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def save_weights(net: Network, path: Union[str, Path]) -> None:
    path = Path(path)
    entries = []
    with staged_directory(path) as staging:
        for name, param in net.named_parameters():
            filename = f"{name}.canm"
            (staging / filename).write_bytes(encode_tensor(param))
            entries.append({"name": name, "shape": list(param.shape), "file": filename})
        manifest = {
            "format_version": FORMAT_VERSION,
            "config_hash": net.config.config_hash(),
            "config": json.loads(net.config.model_dump_json()),
            "parameters": entries,
        }
        (staging / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"saved {len(entries)} parameters to {path}")


def read_manifest(path: Union[str, Path]) -> dict:
    manifest_path = Path(path) / MANIFEST
    try:
        return json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint manifest {manifest_path}: {e}") from e


def load_weights(net: Network, path: Union[str, Path]) -> None:
    """Load a checkpoint into ``net``. Names are compared first, then shapes,
    then the config hash; file contents are decoded before any parameter is
    replaced, so a failed load leaves ``net`` untouched."""
    path = Path(path)
    manifest = read_manifest(path)
    entries = {entry["name"]: entry for entry in manifest.get("parameters", [])}
    own = dict(net.named_parameters())

    missing = sorted(set(own) - set(entries))
    unexpected = sorted(set(entries) - set(own))
    if missing or unexpected:
        raise CheckpointError(
            f"Checkpoint {path} parameter names differ from the network: "
            f"missing={missing} unexpected={unexpected}"
        )
    for name, param in own.items():
        if tuple(entries[name]["shape"]) != param.shape:
            raise CheckpointError(
                f"Parameter '{name}' has shape {tuple(entries[name]['shape'])} in {path}, expected {param.shape}"
            )
    if manifest.get("config_hash") != net.config.config_hash():
        raise CheckpointError(f"Checkpoint {path} was saved from a different network config")

    state: dict[str, np.ndarray] = {}
    for name, param in own.items():
        try:
            array = load_tensor(path / entries[name]["file"])
        except CheckpointError as e:
            raise CheckpointError(f"Parameter '{name}': {e}") from e
        if array.shape != param.shape:
            raise CheckpointError(f"Parameter '{name}' file holds shape {array.shape}, expected {param.shape}")
        state[name] = array
    net.load_state_dict(state)
    logger.info(f"loaded {len(state)} parameters from {path}")
