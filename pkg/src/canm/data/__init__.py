from canm.data.imageio import encode_png, image_bits, quantize, read_image, write_image
from canm.data.kspace import band_mask, centered_fft, kept_band, kspace_degrade
from canm.data.phantom import ImagePair, edge_correlation, export_pair, synth_pair
from canm.data.transforms import MisalignSpec, NormalizationRecord, denormalize, misalign, normalize

__all__ = [
    "ImagePair",
    "MisalignSpec",
    "NormalizationRecord",
    "band_mask",
    "centered_fft",
    "denormalize",
    "edge_correlation",
    "encode_png",
    "export_pair",
    "image_bits",
    "kept_band",
    "kspace_degrade",
    "misalign",
    "normalize",
    "quantize",
    "read_image",
    "synth_pair",
    "write_image",
]
