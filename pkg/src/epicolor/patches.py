"""Dense overlapping patch grids and patch extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagekit import RasterImage


@dataclass(frozen=True)
class PatchGrid:
    """Top-left patch anchors as (row, col) pairs plus the shared patch size.

    Anchors are sorted row-major and are unique by construction.
    """

    anchors: np.ndarray  # (count, 2) int64
    patch_size: int

    def __post_init__(self):
        anchors = np.ascontiguousarray(self.anchors, dtype=np.int64)
        if anchors.ndim != 2 or anchors.shape[1] != 2:
            raise ValueError(f"anchors must be (count, 2), got shape {anchors.shape}")
        if self.patch_size < 1:
            raise ValueError("patch size must be positive")
        object.__setattr__(self, "anchors", anchors)

    @property
    def count(self) -> int:
        return self.anchors.shape[0]


def _axis_positions(extent: int, patch_size: int, gap: int) -> list[int]:
    last = extent - patch_size
    positions = list(range(0, last + 1, gap))
    if positions[-1] != last:
        positions.append(last)  # clamp a final anchor to the far edge
    return positions


def sample_grid(width: int, height: int, patch_size: int, omega: float) -> PatchGrid:
    """Regular anchor lattice with gap max(1, round(omega * patch_size)).

    Anchors step by the gap from 0 on each axis; when the stride does not
    land on the last valid position (dim - patch_size) an extra anchor is
    clamped there, so the union of patches always covers the image.
    """
    if patch_size < 1:
        raise ValueError("patch size must be positive")
    if patch_size > min(width, height):
        raise ValueError(
            f"patch size {patch_size} exceeds the smaller image side "
            f"{min(width, height)}"
        )
    if not 0.0 < omega <= 1.0:
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    gap = max(1, int(np.floor(omega * patch_size + 0.5)))
    rows = _axis_positions(height, patch_size, gap)
    cols = _axis_positions(width, patch_size, gap)
    anchors = np.array([(r, c) for r in rows for c in cols], dtype=np.int64)
    return PatchGrid(anchors, patch_size)


def extract_patch(img: RasterImage, anchor, patch_size: int) -> RasterImage:
    """Copy the square window with the given (row, col) top-left corner."""
    r, c = int(anchor[0]), int(anchor[1])
    if r < 0 or c < 0 or r + patch_size > img.height or c + patch_size > img.width:
        raise ValueError(
            f"patch at ({r}, {c}) with size {patch_size} falls outside the "
            f"{img.height}x{img.width} image"
        )
    window = img.data[r : r + patch_size, c : c + patch_size].copy()
    return RasterImage(window, img.semantics)


def extract_patches(img: RasterImage, grid: PatchGrid) -> np.ndarray:
    """Stack every grid patch into a (count, K, K, channels) array."""
    k = grid.patch_size
    if k > min(img.height, img.width):
        raise ValueError("grid patch size exceeds the image")
    rows = grid.anchors[:, 0]
    cols = grid.anchors[:, 1]
    if rows.size and (
        rows.min() < 0
        or cols.min() < 0
        or rows.max() + k > img.height
        or cols.max() + k > img.width
    ):
        raise ValueError("grid anchors fall outside the image")
    windows = sliding_window_view(img.data, (k, k), axis=(0, 1))
    stacked = windows[rows, cols]  # (count, channels, k, k)
    return np.ascontiguousarray(np.moveaxis(stacked, 1, 3))
