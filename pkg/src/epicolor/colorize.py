"""Chroma transfer: paint a grayscale image with a trained model's colors.

Each target patch is matched to its single best map placement (highest
log-prior plus blended luminance/descriptor log-likelihood). The I and Q
planes of the matched map windows are then splatted back onto the target
geometry; where overlapping patches disagree, the pixel takes the plain
average. Luminance passes through untouched.
"""

from __future__ import annotations

import numpy as np

from .dsift import descriptor_matrix
from .imagekit import RasterImage, Semantics, yiq_to_rgb
from .likelihood import (
    batched_descriptor_log_likelihoods,
    batched_patch_log_likelihoods,
    combined_log_likelihoods,
)
from .model import DualEpitome
from .patches import PatchGrid, extract_patches, sample_grid

INFERENCE_OMEGA = 0.25


def _scores(
    luma_patches: np.ndarray, descriptors, model: DualEpitome, workers: int = 1
) -> np.ndarray:
    """(Q, L) decision scores: log prior + blended log-likelihoods (Y only)."""
    ll_luma = batched_patch_log_likelihoods(
        luma_patches, model.yiq, channels=(0,), workers=workers
    )
    ll_desc = batched_descriptor_log_likelihoods(descriptors, model.dsift)
    combined = combined_log_likelihoods(ll_luma, ll_desc, model.lam)
    return combined + model.prior.log_pi[None, :]


def best_mapping(patch_luma, descriptor, model: DualEpitome) -> int:
    """Index of the most probable placement for one luminance patch.

    Ties resolve to the lowest index.
    """
    patch = np.asarray(patch_luma, dtype=np.float64)
    if patch.ndim == 3 and patch.shape[2] == 1:
        patch = patch[:, :, 0]
    if patch.ndim != 2:
        raise ValueError(f"expected a 2-D luminance patch, got shape {patch.shape}")
    values = np.asarray(getattr(descriptor, "values", descriptor), dtype=np.float64)
    scores = _scores(patch[None, :, :, None], values[None], model)
    return int(np.argmax(scores[0]))


def transfer_chroma(
    target_luma: RasterImage,
    grid: PatchGrid,
    mappings,
    model: DualEpitome,
) -> RasterImage:
    """Overlay matched map chroma onto the target, averaging overlaps.

    The output Y plane is the input luminance, bit for bit; the I and Q
    planes are the per-pixel average of every covering patch's matched
    window. Every pixel must be covered by at least one patch.
    """
    if target_luma.semantics is not Semantics.Y:
        raise ValueError(f"expected a luminance target, got {target_luma.semantics.value}")
    mappings = np.asarray(mappings, dtype=np.int64)
    if mappings.shape != (grid.count,):
        raise ValueError(
            f"need one mapping per grid anchor ({grid.count}), got shape {mappings.shape}"
        )
    rows, cols = model.yiq.rows, model.yiq.cols
    if mappings.size and (mappings.min() < 0 or mappings.max() >= rows * cols):
        raise ValueError("mapping index out of range")

    k = grid.patch_size
    height, width = target_luma.height, target_luma.width
    wrap_r = np.arange(rows + k - 1) % rows
    wrap_c = np.arange(cols + k - 1) % cols
    chroma_ext = model.yiq.mu[np.ix_(wrap_r, wrap_c)][:, :, 1:3]

    sums = np.zeros((height, width, 2))
    cover = np.zeros((height, width))
    for (r, c), mapping in zip(grid.anchors, mappings):
        u, v = divmod(int(mapping), cols)
        sums[r : r + k, c : c + k] += chroma_ext[u : u + k, v : v + k]
        cover[r : r + k, c : c + k] += 1.0
    if cover.min() < 1.0:
        raise RuntimeError("patch grid leaves pixels uncovered; cannot average chroma")

    out = np.empty((height, width, 3))
    out[:, :, 0] = target_luma.data[:, :, 0]
    out[:, :, 1:] = sums / cover[:, :, None]
    return RasterImage(out, Semantics.YIQ)


def _reference_luma_stats(model: DualEpitome) -> tuple[float, float]:
    # The map is the only record of the training image: take its Y means,
    # spreading the per-coordinate variance on top of the mean spread.
    mu_y = model.yiq.mu[:, :, 0]
    phi_y = model.yiq.phi[:, :, 0]
    return float(mu_y.mean()), float(np.sqrt(phi_y.mean() + mu_y.var()))


def _remap_luminance(target: RasterImage, model: DualEpitome) -> RasterImage:
    """Affine-map target luminance onto the model's luminance statistics."""
    ref_mean, ref_std = _reference_luma_stats(model)
    values = target.data[:, :, 0]
    std = float(values.std())
    if std < 1e-12:
        remapped = values + (ref_mean - float(values.mean()))
    else:
        remapped = (values - float(values.mean())) * (ref_std / std) + ref_mean
    return RasterImage(np.clip(remapped, 0.0, 1.0)[:, :, None], Semantics.Y)


def colorize(
    target_gray: RasterImage,
    model: DualEpitome,
    omega_infer: float = INFERENCE_OMEGA,
    luma_remap: bool = False,
    workers: int = 1,
) -> RasterImage:
    """Colorize a grayscale image with a trained model; returns RGB.

    With ``luma_remap`` the target luminance is affine-matched to the
    model's statistics for matching only; the output keeps the original
    luminance either way.
    """
    if target_gray.semantics is not Semantics.Y:
        raise ValueError(f"expected a luminance target, got {target_gray.semantics.value}")
    k = model.patch_size
    if min(target_gray.height, target_gray.width) < k:
        raise ValueError(
            f"target ({target_gray.height}x{target_gray.width}) is smaller than "
            f"the model's patch size {k}"
        )
    matching = _remap_luminance(target_gray, model) if luma_remap else target_gray
    grid = sample_grid(target_gray.width, target_gray.height, k, omega_infer)
    luma_patches = extract_patches(matching, grid)
    descriptors = descriptor_matrix(matching, grid, model.sift_grid)
    scores = _scores(luma_patches, descriptors, model, workers)
    mappings = np.argmax(scores, axis=1)
    return yiq_to_rgb(transfer_chroma(target_gray, grid, mappings, model))
