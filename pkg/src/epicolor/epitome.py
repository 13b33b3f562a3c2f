"""Model initialization and the EM training loop.

Each iteration scores every reference patch against every map placement
(appearance and descriptor terms blended by ``lam``), turns the scores
into per-patch posteriors, and re-estimates the map from the
posterior-weighted patch pixels. Both update passes run on the cyclic
cross-correlation engine from :mod:`epicolor.likelihood`: accumulating a
patch value z (and z^2) into every map coordinate a placement touches is
the cyclic convolution of the posterior map with the patch, so the whole
M-step reduces to a handful of FFTs per patch chunk.

Variances are floored, prior entries are floored before the log, and map
coordinates that received (numerically) zero posterior weight keep their
previous parameters; every floor hit is counted so the trainer's history
shows exactly where the objective may dip.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsift import descriptor_matrix
from .imagekit import RasterImage, Semantics, rgb_to_yiq
from .likelihood import (
    _chunk_slices,
    _map_ordered,
    _pad_kernels,
    batched_descriptor_log_likelihoods,
    batched_patch_log_likelihoods,
    combined_log_likelihoods,
    log_marginal_rows,
    posterior_table,
)
from .model import (
    DescriptorEpitome,
    DualEpitome,
    Epitome,
    FloorActivations,
    MappingPrior,
    PosteriorTable,
    PRIOR_FLOOR,
    TrainConfig,
)
from .patches import extract_patches, sample_grid

CONVERGENCE_RTOL = 1e-6

# Posterior mass below this (scaled by the patch count, which also scales
# the FFT round-off in the accumulated weight map) counts as zero, and the
# affected coordinates keep their previous parameters.
WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class TrainResult:
    """Trained model plus the per-iteration objective and floor history.

    ``objectives[i]`` is the total log-likelihood of the parameters
    entering iteration i; ``floor_activations[i]`` counts the floor hits
    of the update performed after it.
    """

    model: DualEpitome
    objectives: list[float]
    floor_activations: list[FloorActivations]


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5))


def init_epitome(reference: RasterImage, descriptors, config: TrainConfig) -> DualEpitome:
    """Seeded initialization around the global statistics of the reference.

    Map means start at the per-channel global mean plus uniform jitter in
    [-init_noise, init_noise]; variances start at the (floored) global
    variance. The descriptor table is built the same way from the
    descriptor rows, and the placement prior starts uniform.
    """
    if reference.semantics is not Semantics.YIQ:
        raise ValueError(f"expected a YIQ reference, got {reference.semantics.value}")
    rows = _round_half_away(config.epitome_scale * reference.height)
    cols = _round_half_away(config.epitome_scale * reference.width)
    if rows < config.patch_size or cols < config.patch_size:
        raise ValueError(
            f"scaled map ({rows}x{cols}) is smaller than the patch size "
            f"{config.patch_size}; use a larger reference or scale"
        )
    count = rows * cols

    desc = np.asarray(descriptors, dtype=np.float64)
    if desc.ndim != 2:
        raise ValueError(f"expected (count, dims) descriptors, got shape {desc.shape}")

    rng = np.random.default_rng(config.seed)
    flat = reference.data.reshape(-1, reference.channels)
    mu = flat.mean(axis=0) + rng.uniform(
        -config.init_noise, config.init_noise, size=(rows, cols, reference.channels)
    )
    phi = np.broadcast_to(
        np.maximum(flat.var(axis=0), config.variance_floor),
        (rows, cols, reference.channels),
    ).copy()

    desc_mu = desc.mean(axis=0) + rng.uniform(
        -config.init_noise, config.init_noise, size=(count, desc.shape[1])
    )
    desc_phi = np.broadcast_to(
        np.maximum(desc.var(axis=0), config.variance_floor), (count, desc.shape[1])
    ).copy()

    return DualEpitome(
        yiq=Epitome(mu, phi),
        dsift=DescriptorEpitome(desc_mu, desc_phi),
        prior=MappingPrior.uniform(count),
        patch_size=config.patch_size,
        sift_grid=config.sift_grid,
        lam=config.lam,
    )


def _posterior_array(posterior) -> np.ndarray:
    if isinstance(posterior, PosteriorTable):
        return posterior.q
    return np.ascontiguousarray(posterior, dtype=np.float64)


def m_step(
    patches: np.ndarray,
    descriptors: np.ndarray,
    posterior,
    previous: DualEpitome,
    config: TrainConfig,
) -> tuple[Epitome, DescriptorEpitome, MappingPrior, FloorActivations]:
    """One maximization update from the current responsibilities.

    Map means are the posterior-weighted average of the patch pixels each
    coordinate received; variances are the weighted squared residual about
    the new means. The descriptor table and the prior update from the same
    posterior mass. Returns the updated parts plus the floor-hit counts.
    """
    patches = np.asarray(patches, dtype=np.float64)
    q = _posterior_array(posterior)
    rows, cols, chans = previous.yiq.mu.shape
    count = rows * cols
    total, kr, kc = patches.shape[0], patches.shape[1], patches.shape[2]
    if patches.ndim != 4 or patches.shape[3] != chans:
        raise ValueError(f"patch batch shape {patches.shape} does not match the map")
    if q.shape != (total, count):
        raise ValueError(f"posterior shape {q.shape} does not match ({total}, {count})")
    if kr > rows or kc > cols:
        raise ValueError(f"{kr}x{kc} patches do not fit a {rows}x{cols} map")
    desc = np.asarray(descriptors, dtype=np.float64)
    if desc.shape != (total, previous.dsift.dims):
        raise ValueError(
            f"descriptor shape {desc.shape} does not match "
            f"({total}, {previous.dsift.dims})"
        )

    q_maps = q.reshape(total, rows, cols)
    fcols = cols // 2 + 1

    def run_chunk(sl: slice):
        q_f = np.fft.rfft2(q_maps[sl])  # (q, rows, fcols)
        chunk = np.moveaxis(patches[sl], 3, 1)  # (q, C, kr, kc)
        padded = _pad_kernels(chunk, rows, cols)
        z_f = np.fft.rfft2(padded)
        padded[..., :kr, :kc] = chunk * chunk
        z2_f = np.fft.rfft2(padded)
        return (
            (q_f[:, None] * z_f).sum(axis=0),  # (C, rows, fcols)
            (q_f[:, None] * z2_f).sum(axis=0),
        )

    sum_z_f = np.zeros((chans, rows, fcols), dtype=np.complex128)
    sum_z2_f = np.zeros((chans, rows, fcols), dtype=np.complex128)
    for part_z, part_z2 in _map_ordered(run_chunk, _chunk_slices(total), config.workers):
        sum_z_f += part_z
        sum_z2_f += part_z2

    weighted_z = np.moveaxis(np.fft.irfft2(sum_z_f, s=(rows, cols)), 0, 2)
    weighted_z2 = np.moveaxis(np.fft.irfft2(sum_z2_f, s=(rows, cols)), 0, 2)
    ones_f = np.fft.rfft2(_pad_kernels(np.ones((kr, kc)), rows, cols))
    weight = np.fft.irfft2(np.fft.rfft2(q_maps.sum(axis=0)) * ones_f, s=(rows, cols))

    covered = weight > WEIGHT_EPS * max(1.0, total)
    safe_weight = np.where(covered, weight, 1.0)[:, :, None]
    mask = covered[:, :, None]
    mu = np.where(mask, weighted_z / safe_weight, previous.yiq.mu)
    phi_raw = np.where(mask, weighted_z2 / safe_weight - mu**2, previous.yiq.phi)
    yiq_floored = int(np.count_nonzero(mask & (phi_raw < config.variance_floor)))
    phi = np.maximum(phi_raw, config.variance_floor)

    # Descriptor table: plain weighted rows, no geometry involved.
    mass = q.sum(axis=0)  # (L,)
    row_mask = (mass > WEIGHT_EPS)[:, None]
    safe_mass = np.where(row_mask[:, 0], mass, 1.0)[:, None]
    desc_mu = np.where(row_mask, (q.T @ desc) / safe_mass, previous.dsift.mu)
    desc_phi_raw = np.where(
        row_mask, (q.T @ (desc * desc)) / safe_mass - desc_mu**2, previous.dsift.phi
    )
    dsift_floored = int(np.count_nonzero(row_mask & (desc_phi_raw < config.variance_floor)))
    desc_phi = np.maximum(desc_phi_raw, config.variance_floor)

    pi = mass / total
    prior_floored = int(np.count_nonzero(pi < PRIOR_FLOOR))
    prior = MappingPrior.from_probabilities(pi)

    activations = FloorActivations(yiq_floored, dsift_floored, prior_floored)
    return Epitome(mu, phi), DescriptorEpitome(desc_mu, desc_phi), prior, activations


def train(reference: RasterImage, config: TrainConfig, progress=None) -> TrainResult:
    """Fit the dual appearance model to a color reference image with EM.

    ``progress(iteration, objective)`` is called once per iteration with
    the objective of the parameters entering it. Training stops early when
    the relative objective change drops below 1e-6.
    """
    if reference.semantics is not Semantics.RGB:
        raise ValueError(f"training needs an RGB reference, got {reference.semantics.value}")
    if min(reference.height, reference.width) < config.patch_size:
        raise ValueError(
            f"reference ({reference.height}x{reference.width}) is smaller than "
            f"the patch size {config.patch_size}"
        )

    yiq = rgb_to_yiq(reference)
    grid = sample_grid(reference.width, reference.height, config.patch_size, config.omega)
    patch_stack = extract_patches(yiq, grid)
    luma = RasterImage(yiq.data[:, :, :1].copy(), Semantics.Y)
    descriptors = descriptor_matrix(luma, grid, config.sift_grid)

    current = init_epitome(yiq, descriptors, config)
    objectives: list[float] = []
    floors: list[FloorActivations] = []
    previous_objective = None

    for iteration in range(config.iterations):
        ll_app = batched_patch_log_likelihoods(
            patch_stack, current.yiq, workers=config.workers
        )
        ll_desc = batched_descriptor_log_likelihoods(descriptors, current.dsift)
        combined = combined_log_likelihoods(ll_app, ll_desc, config.lam)
        objective = float(log_marginal_rows(combined, current.prior).sum())
        objectives.append(objective)
        if progress is not None:
            progress(iteration, objective)
        if (
            previous_objective is not None
            and abs(objective - previous_objective)
            < CONVERGENCE_RTOL * abs(previous_objective)
        ):
            break
        previous_objective = objective

        posterior = posterior_table(combined, current.prior)
        appearance, table, prior, hits = m_step(
            patch_stack, descriptors, posterior, current, config
        )
        floors.append(hits)
        current = replace(current, yiq=appearance, dsift=table, prior=prior)

    return TrainResult(current, objectives, floors)
