"""Utils package for canm."""

from .fs import atomic_write_bytes, atomic_write_text, staged_directory
from .preset_loader import PresetLoader, get_preset, list_presets

__all__ = [
    "PresetLoader",
    "atomic_write_bytes",
    "atomic_write_text",
    "get_preset",
    "list_presets",
    "staged_directory",
]
