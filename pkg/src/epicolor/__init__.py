"""epicolor: automatic image colorization via a condensed appearance map.

Train a small toroidal map of per-pixel Gaussians (plus a per-placement
descriptor model and placement prior) from one color reference image with
EM, then colorize grayscale images by matching each patch to its most
probable placement and transferring the map's chroma.
"""

from .colorize import best_mapping, colorize, transfer_chroma
from .dsift import (
    PatchDescriptor,
    descriptor_image,
    descriptor_length,
    descriptor_matrix,
    patch_descriptor,
)
from .epitome import TrainResult, init_epitome, m_step, train
from .imagekit import (
    RasterImage,
    Semantics,
    grayscale_as_luminance,
    load_image,
    rgb_to_yiq,
    save_image,
    yiq_to_rgb,
)
from .likelihood import (
    batched_descriptor_log_likelihoods,
    batched_patch_log_likelihoods,
    combined_log_likelihoods,
    descriptor_log_likelihoods,
    e_step,
    gaussian_log_density,
    log_marginal_rows,
    mapping_coords,
    patch_log_likelihoods,
    patch_log_likelihoods_naive,
    posterior_table,
    total_log_likelihood,
)
from .model import (
    DescriptorEpitome,
    DualEpitome,
    Epitome,
    FloorActivations,
    MappingPrior,
    PosteriorTable,
    TrainConfig,
)
from .modelfile import ModelFormatError, load_model, save_model
from .patches import PatchGrid, extract_patch, extract_patches, sample_grid
from .selftest import run_selftest

__version__ = "0.1.0"

__all__ = [
    "DescriptorEpitome",
    "DualEpitome",
    "Epitome",
    "FloorActivations",
    "MappingPrior",
    "ModelFormatError",
    "PatchDescriptor",
    "PatchGrid",
    "PosteriorTable",
    "RasterImage",
    "Semantics",
    "TrainConfig",
    "TrainResult",
    "batched_descriptor_log_likelihoods",
    "batched_patch_log_likelihoods",
    "best_mapping",
    "colorize",
    "combined_log_likelihoods",
    "descriptor_image",
    "descriptor_length",
    "descriptor_log_likelihoods",
    "descriptor_matrix",
    "e_step",
    "extract_patch",
    "extract_patches",
    "gaussian_log_density",
    "grayscale_as_luminance",
    "init_epitome",
    "load_image",
    "load_model",
    "log_marginal_rows",
    "m_step",
    "mapping_coords",
    "patch_descriptor",
    "patch_log_likelihoods",
    "patch_log_likelihoods_naive",
    "posterior_table",
    "rgb_to_yiq",
    "run_selftest",
    "sample_grid",
    "save_image",
    "save_model",
    "total_log_likelihood",
    "train",
    "transfer_chroma",
    "yiq_to_rgb",
]
