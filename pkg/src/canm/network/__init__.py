from canm.network.checkpoint import load_weights, read_manifest, save_weights
from canm.network.configuration import OVERFIT_LEARNING_RATE, VARIANTS, NetworkConfig, TrainingConfig
from canm.network.model import Network, build, build_variant, count_params_flops

__all__ = [
    "OVERFIT_LEARNING_RATE",
    "VARIANTS",
    "Network",
    "NetworkConfig",
    "TrainingConfig",
    "build",
    "build_variant",
    "count_params_flops",
    "load_weights",
    "read_manifest",
    "save_weights",
]
