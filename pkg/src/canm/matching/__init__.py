from canm.matching.adain import AdaIN, adain, instance_norm
from canm.matching.nbfm import (
    ConcatFusion,
    MatchingUnit,
    MatchResult,
    count_similarities,
    cosine_similarity,
    global_match,
    nbfm_fuse,
    nbfm_match,
    neighborhood_mask,
)
from canm.matching.patches import fold_patches, unfold_patches

__all__ = [
    "AdaIN",
    "ConcatFusion",
    "MatchResult",
    "MatchingUnit",
    "adain",
    "count_similarities",
    "cosine_similarity",
    "fold_patches",
    "global_match",
    "instance_norm",
    "nbfm_fuse",
    "nbfm_match",
    "neighborhood_mask",
    "unfold_patches",
]
