"""Per-patch gradient-orientation descriptors (dense SIFT style).

A K x K luminance patch is split into an R x R grid of cells whose edges
sit at floor(i * K / R). Gradients come from central differences, falling
back to one-sided differences on the patch border. Each pixel votes its
full gradient magnitude into the one orientation bin of [0, 2*pi)
containing atan2(gy, gx), out of 8 equal bins. The cell histograms are
concatenated row-major (8 * R * R values) and L2-normalized with an
epsilon guard, so the all-zero histogram of a constant patch stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagekit import RasterImage, Semantics
from .patches import PatchGrid, extract_patches

ORIENTATION_BINS = 8
NORM_EPS = 1e-12


@dataclass(frozen=True)
class PatchDescriptor:
    """Flattened R x R x 8 orientation histogram, L2-normalized."""

    values: np.ndarray
    grid: int

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("descriptor values must be a flat vector")
        if self.grid < 1:
            raise ValueError("descriptor grid must be positive")
        if values.size != descriptor_length(self.grid):
            raise ValueError(
                f"descriptor for grid {self.grid} needs "
                f"{descriptor_length(self.grid)} values, got {values.size}"
            )
        object.__setattr__(self, "values", values)


def descriptor_length(grid: int) -> int:
    """Dimensionality of a descriptor with an R x R cell grid."""
    return ORIENTATION_BINS * grid * grid


def _luminance_array(patch) -> np.ndarray:
    if isinstance(patch, RasterImage):
        if patch.semantics is not Semantics.Y:
            raise ValueError(f"expected a luminance image, got {patch.semantics.value}")
        return patch.data[:, :, 0]
    arr = np.asarray(patch, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D luminance patch, got shape {arr.shape}")
    return arr


def _cell_index(extent: int, grid: int) -> np.ndarray:
    # cell i spans rows floor(i*extent/grid) .. floor((i+1)*extent/grid) - 1
    edges = np.array([(i * extent) // grid for i in range(grid + 1)], dtype=np.int64)
    return np.searchsorted(edges, np.arange(extent), side="right") - 1


def raw_histograms(patches: np.ndarray, grid: int) -> np.ndarray:
    """Un-normalized orientation histograms for a (Q, H, W) patch batch.

    Returns (Q, 8 * grid * grid) rows of magnitude-weighted votes; the sum
    of each row equals the sum of the patch's gradient magnitudes.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3:
        raise ValueError(f"expected a (count, H, W) batch, got shape {patches.shape}")
    q, h, w = patches.shape
    if min(h, w) < 2 * grid:
        raise ValueError(
            f"patch side must be at least twice the descriptor grid "
            f"({2 * grid}), got {h}x{w}"
        )
    gy = np.gradient(patches, axis=1)
    gx = np.gradient(patches, axis=2)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx) % (2.0 * np.pi)
    bins = (theta // (np.pi / 4.0)).astype(np.int64) % ORIENTATION_BINS

    cell_r = _cell_index(h, grid)  # (h,)
    cell_c = _cell_index(w, grid)  # (w,)
    flat = (
        (
            np.arange(q, dtype=np.int64)[:, None, None] * grid
            + cell_r[None, :, None]
        )
        * grid
        + cell_c[None, None, :]
    ) * ORIENTATION_BINS + bins
    hist = np.bincount(
        flat.ravel(), weights=mag.ravel(), minlength=q * descriptor_length(grid)
    )
    return hist.reshape(q, descriptor_length(grid))


def _normalize_rows(hist: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(hist, axis=1, keepdims=True)
    return hist / np.maximum(norms, NORM_EPS)


def patch_descriptor(patch, grid: int) -> PatchDescriptor:
    """Descriptor of a single luminance patch (RasterImage[Y] or 2-D array)."""
    arr = _luminance_array(patch)
    raw = raw_histograms(arr[None], grid)
    return PatchDescriptor(_normalize_rows(raw)[0], grid)


def descriptor_matrix(img: RasterImage, patch_grid: PatchGrid, grid: int) -> np.ndarray:
    """Descriptors for every anchor of a patch grid, stacked as matrix rows."""
    if img.semantics is not Semantics.Y:
        raise ValueError(f"expected a luminance image, got {img.semantics.value}")
    stack = extract_patches(img, patch_grid)[:, :, :, 0]
    return _normalize_rows(raw_histograms(stack, grid))


def descriptor_image(img: RasterImage, patch_grid: PatchGrid, grid: int) -> list[PatchDescriptor]:
    """Per-anchor descriptors, aligned with ``patch_grid.anchors``."""
    mat = descriptor_matrix(img, patch_grid, grid)
    return [PatchDescriptor(row.copy(), grid) for row in mat]
