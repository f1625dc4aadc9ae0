"""Preset loader with a per-name cache."""

import logging
import os
from typing import Any, Dict, Optional

import yaml

from canm.errors import ConfigurationError

logger = logging.getLogger(__name__)


class PresetLoader:
    """Reads named network presets from the packaged YAML file."""

    def __init__(self, config_path: Optional[str] = None):
        """Initialize the loader.

        Args:
            config_path: Path to a presets file; defaults to the packaged one
        """
        self.config_path = config_path or os.path.abspath(
            os.path.join(os.path.dirname(__file__), "../conf/presets.yaml")
        )
        self._config: Optional[Dict[str, Any]] = None
        self._preset_cache: Dict[str, Dict[str, Any]] = {}

    def load_config(self) -> Dict[str, Any]:
        """Load the presets file once.

        Returns:
            Parsed YAML document
        """
        if self._config is None:
            if not os.path.exists(self.config_path):
                raise FileNotFoundError(f"Preset file not found: {self.config_path}")

            with open(self.config_path, "r", encoding="utf-8") as file:
                self._config = yaml.safe_load(file) or {}

        return self._config

    def get_preset_config(self, name: str = "default") -> Dict[str, Any]:
        """Get the raw field mapping of one preset.

        Raises:
            ConfigurationError: If the preset is not defined
        """
        config = self.load_config()

        if "presets" not in config:
            raise ConfigurationError("No 'presets' section found in preset file")

        if name not in config["presets"]:
            available = list(config["presets"].keys())
            raise ConfigurationError(f"Preset '{name}' not found. Available presets: {available}")

        return config["presets"][name] or {}

    def get_preset(self, name: str = "default", force_reload: bool = False) -> Dict[str, Any]:
        """Get a cached copy of a preset's fields.

        Args:
            name: Preset name
            force_reload: Rebuild the cache entry

        Returns:
            Field mapping suitable for ``NetworkConfig(**fields)``
        """
        if force_reload or name not in self._preset_cache:
            self._preset_cache[name] = dict(self.get_preset_config(name))
        else:
            logger.debug(f"preset cache hit: {name}")
        return dict(self._preset_cache[name])

    def list_available_presets(self) -> list:
        config = self.load_config()
        return list(config.get("presets", {}).keys())


# Global instance for easy access
_preset_loader = PresetLoader()


def get_preset(name: str = "default", force_reload: bool = False) -> Dict[str, Any]:
    return _preset_loader.get_preset(name, force_reload)


def list_presets() -> list:
    return _preset_loader.list_available_presets()
