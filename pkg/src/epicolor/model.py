"""Containers for the condensed appearance model and its training state.

An :class:`Epitome` is a small toroidal map of per-pixel Gaussians (mean
and variance per channel). Every patch of a target image is explained by
one of L = rows * cols discrete window placements on that map; a
:class:`MappingPrior` holds the placement probabilities and a
:class:`DescriptorEpitome` attaches a diagonal Gaussian over gradient
descriptors to each placement. :class:`DualEpitome` bundles the three
parts with the geometry they were trained for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsift import descriptor_length

VARIANCE_FLOOR = 1e-4
PRIOR_FLOOR = 1e-12


@dataclass(frozen=True)
class Epitome:
    """Toroidal Gaussian appearance map: mean and variance per channel."""

    mu: np.ndarray  # (rows, cols, channels)
    phi: np.ndarray  # (rows, cols, channels), strictly positive

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        if mu.ndim != 3:
            raise ValueError(f"mu must be (rows, cols, channels), got {mu.shape}")
        if phi.shape != mu.shape:
            raise ValueError(f"phi shape {phi.shape} differs from mu shape {mu.shape}")
        if not np.all(phi > 0.0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)

    @property
    def rows(self) -> int:
        return self.mu.shape[0]

    @property
    def cols(self) -> int:
        return self.mu.shape[1]

    @property
    def channels(self) -> int:
        return self.mu.shape[2]

    @property
    def mapping_count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class MappingPrior:
    """Log probabilities over the L window placements; exp sums to 1."""

    log_pi: np.ndarray  # (L,), all entries finite

    def __post_init__(self):
        log_pi = np.ascontiguousarray(self.log_pi, dtype=np.float64)
        if log_pi.ndim != 1 or log_pi.size < 1:
            raise ValueError("log_pi must be a non-empty vector")
        if not np.all(np.isfinite(log_pi)):
            raise ValueError("log prior entries must be finite")
        total = np.exp(log_pi).sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"prior probabilities sum to {total}, expected 1")
        object.__setattr__(self, "log_pi", log_pi)

    @property
    def count(self) -> int:
        return self.log_pi.size

    @classmethod
    def uniform(cls, count: int) -> "MappingPrior":
        return cls(np.full(count, -np.log(count)))

    @classmethod
    def from_probabilities(cls, pi: np.ndarray) -> "MappingPrior":
        """Floor probabilities at PRIOR_FLOOR, renormalize, and take logs."""
        pi = np.maximum(np.asarray(pi, dtype=np.float64), PRIOR_FLOOR)
        return cls(np.log(pi / pi.sum()))


@dataclass(frozen=True)
class DescriptorEpitome:
    """Per-placement diagonal Gaussian over patch descriptors."""

    mu: np.ndarray  # (L, dims)
    phi: np.ndarray  # (L, dims), strictly positive

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        if mu.ndim != 2:
            raise ValueError(f"descriptor table must be (L, dims), got {mu.shape}")
        if phi.shape != mu.shape:
            raise ValueError(f"phi shape {phi.shape} differs from mu shape {mu.shape}")
        if not np.all(phi > 0.0):
            raise ValueError("descriptor variances must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)

    @property
    def count(self) -> int:
        return self.mu.shape[0]

    @property
    def dims(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True)
class DualEpitome:
    """Trained model: appearance map, descriptor table, placement prior.

    ``lam`` weights the appearance term against the descriptor term when
    the two log-likelihoods are blended.
    """

    yiq: Epitome
    dsift: DescriptorEpitome
    prior: MappingPrior
    patch_size: int
    sift_grid: int
    lam: float

    def __post_init__(self):
        count = self.yiq.mapping_count
        if self.yiq.channels != 3:
            raise ValueError("the appearance map must have 3 (YIQ) channels")
        if self.dsift.count != count or self.prior.count != count:
            raise ValueError(
                "appearance map, descriptor table, and prior disagree on the "
                "number of placements"
            )
        if self.dsift.dims != descriptor_length(self.sift_grid):
            raise ValueError(
                f"descriptor table has {self.dsift.dims} dims, expected "
                f"{descriptor_length(self.sift_grid)} for grid {self.sift_grid}"
            )
        if self.patch_size < 1:
            raise ValueError("patch size must be positive")
        if self.patch_size > min(self.yiq.rows, self.yiq.cols):
            raise ValueError("patch size exceeds the appearance map")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")

    @property
    def mapping_count(self) -> int:
        return self.yiq.mapping_count


@dataclass(frozen=True)
class PosteriorTable:
    """Per-patch posteriors over placements; each row sums to 1."""

    q: np.ndarray  # (patch count, L)

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.float64)
        if q.ndim != 2:
            raise ValueError(f"posterior table must be 2-D, got shape {q.shape}")
        if q.size and q.min() < 0.0:
            raise ValueError("posterior entries must be non-negative")
        if q.size:
            sums = q.sum(axis=1)
            worst = np.abs(sums - 1.0).max()
            if worst > 1e-9:
                raise ValueError(f"posterior rows must sum to 1 (off by {worst:.3g})")
        object.__setattr__(self, "q", q)

    @property
    def patch_count(self) -> int:
        return self.q.shape[0]

    @property
    def mapping_count(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class FloorActivations:
    """How many entries each numerical floor clipped during one update."""

    yiq_variance: int = 0
    dsift_variance: int = 0
    prior: int = 0

    @property
    def any(self) -> bool:
        return bool(self.yiq_variance or self.dsift_variance or self.prior)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``lam`` blends appearance against descriptor scores, ``omega`` sets the
    patch-grid gap as a fraction of the patch size, ``epitome_scale`` sizes
    the map relative to the reference image, and ``init_noise`` is the
    half-width of the uniform jitter applied to the seeded initialization
    (zero gives a deterministic constant start). ``workers`` only controls
    how patch chunks are dispatched; results are identical for any value.
    """

    patch_size: int = 12
    omega: float = 0.5
    iterations: int = 20
    lam: float = 0.5
    sift_grid: int = 3
    epitome_scale: float = 0.5
    variance_floor: float = VARIANCE_FLOOR
    seed: int = 0
    init_noise: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch size must be positive")
        if self.patch_size < 2 * self.sift_grid:
            raise ValueError(
                f"patch size {self.patch_size} too small for descriptor grid "
                f"{self.sift_grid} (needs at least {2 * self.sift_grid})"
            )
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if self.iterations < 0:
            raise ValueError("iteration count must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.sift_grid < 1:
            raise ValueError("descriptor grid must be positive")
        if not 0.0 < self.epitome_scale <= 1.0:
            raise ValueError(f"epitome scale must lie in (0, 1], got {self.epitome_scale}")
        if self.variance_floor <= 0.0:
            raise ValueError("variance floor must be positive")
        if self.init_noise < 0.0:
            raise ValueError("init noise must be non-negative")
        if self.workers < 1:
            raise ValueError("worker count must be positive")
