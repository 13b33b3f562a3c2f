"""Log-likelihood engine for toroidal Gaussian appearance maps.

Scoring one K x K patch against all L = rows * cols map placements is a
sliding-window sum of per-pixel Gaussian log densities, with windows that
wrap around the map edges. Expanding the squared residual splits each
window sum into patch-independent and patch-dependent terms:

    sum_w log N(z; mu, phi) = sum_w [-0.5*log(2*pi*phi) - mu^2 / (2*phi)]
                              + sum_w [z * mu / phi]
                              - sum_w [z^2 / (2*phi)]

The first term is a box sum over the map; the other two are cyclic
cross-correlations of the patch (and its square) against precomputed maps,
evaluated for every placement at once with FFTs. The naive path walks each
wrapped window directly and is the reference the fast path is checked
against.

Patch batches are processed in fixed-size chunks and chunk results are
combined in index order, so the ``workers`` thread count never changes the
result, bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .model import DualEpitome, DescriptorEpitome, Epitome, MappingPrior, PosteriorTable

LOG_TWO_PI = float(np.log(2.0 * np.pi))

# Fixed chunk size for batched patch work; part of the deterministic
# reduction contract, not a tuning knob.
CHUNK_PATCHES = 32


def mapping_coords(mapping: int, offset, rows: int, cols: int) -> tuple[int, int]:
    """Map coordinates reached by patch offset (dr, dc) under a placement.

    Placement ``mapping`` puts the window's top-left corner at
    (mapping // cols, mapping % cols); offsets wrap toroidally.
    """
    if not 0 <= mapping < rows * cols:
        raise ValueError(f"mapping {mapping} out of range for {rows}x{cols} map")
    u, v = divmod(int(mapping), cols)
    return (u + int(offset[0])) % rows, (v + int(offset[1])) % cols


def gaussian_log_density(x, mu, phi):
    """Elementwise log N(x; mu, phi), phi being the variance."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return -0.5 * np.log(2.0 * np.pi * phi) - (x - mu) ** 2 / (2.0 * phi)


def _map_ordered(fn, items, workers: int) -> list:
    """Apply fn to items, preserving order; threads never change results."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _chunk_slices(total: int) -> list[slice]:
    return [slice(i, min(i + CHUNK_PATCHES, total)) for i in range(0, total, CHUNK_PATCHES)]


def _select_channels(epitome: Epitome, patches: np.ndarray, channels):
    """Resolve the channel mask shared by the map and the patch batch.

    ``channels`` indexes map channels; patches must carry exactly those
    channels, in the same order. None means all map channels.
    """
    if channels is None:
        idx = tuple(range(epitome.channels))
    else:
        idx = tuple(int(c) for c in channels)
        if not idx:
            raise ValueError("channel selection must not be empty")
        if any(c < 0 or c >= epitome.channels for c in idx):
            raise ValueError(f"channel selection {idx} out of range")
    if patches.shape[-1] != len(idx):
        raise ValueError(
            f"patch batch has {patches.shape[-1]} channel(s) but {len(idx)} were selected"
        )
    mu = epitome.mu[:, :, idx]
    phi = epitome.phi[:, :, idx]
    return mu, phi


def _as_patch_batch(patches: np.ndarray) -> np.ndarray:
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 4:
        raise ValueError(f"expected a (count, K, K, channels) batch, got {patches.shape}")
    return patches


def _check_window(kr: int, kc: int, rows: int, cols: int) -> None:
    if kr > rows or kc > cols:
        raise ValueError(f"{kr}x{kc} patch does not fit a {rows}x{cols} map")


def patch_log_likelihoods_naive(patch, epitome: Epitome, channels=None) -> np.ndarray:
    """Reference path: walk every wrapped window and sum log densities."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3:
        raise ValueError(f"expected a (K, K, channels) patch, got shape {patch.shape}")
    mu, phi = _select_channels(epitome, patch, channels)
    rows, cols = mu.shape[:2]
    kr, kc = patch.shape[:2]
    _check_window(kr, kc, rows, cols)
    wrap_r = np.arange(rows + kr - 1) % rows
    wrap_c = np.arange(cols + kc - 1) % cols
    mu_ext = mu[np.ix_(wrap_r, wrap_c)]
    phi_ext = phi[np.ix_(wrap_r, wrap_c)]
    out = np.empty(rows * cols)
    for mapping in range(rows * cols):
        u, v = divmod(mapping, cols)
        window_mu = mu_ext[u : u + kr, v : v + kc]
        window_phi = phi_ext[u : u + kr, v : v + kc]
        out[mapping] = gaussian_log_density(patch, window_mu, window_phi).sum()
    return out


def _pad_kernels(kernels: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Zero-pad (..., kr, kc) kernels into the top-left of (..., rows, cols)."""
    kr, kc = kernels.shape[-2:]
    padded = np.zeros(kernels.shape[:-2] + (rows, cols))
    padded[..., :kr, :kc] = kernels
    return padded


def batched_patch_log_likelihoods(
    patches: np.ndarray, epitome: Epitome, channels=None, workers: int = 1
) -> np.ndarray:
    """Fast path: placement scores for a (Q, K, K, C) patch stack, shape (Q, L)."""
    patches = _as_patch_batch(patches)
    mu, phi = _select_channels(epitome, patches, channels)
    rows, cols = mu.shape[:2]
    kr, kc = patches.shape[1:3]
    _check_window(kr, kc, rows, cols)

    # Patch-independent box sum, one value per placement.
    a_map = (-0.5 * (LOG_TWO_PI + np.log(phi)) - mu**2 / (2.0 * phi)).sum(axis=2)
    ones_f = np.fft.rfft2(_pad_kernels(np.ones((kr, kc)), rows, cols))
    base = np.fft.irfft2(np.fft.rfft2(a_map) * np.conj(ones_f), s=(rows, cols))
    base = base.reshape(-1)

    # Patch-dependent correlation maps, channel-first for FFT batching.
    b_f = np.fft.rfft2(np.moveaxis(0.5 / phi, 2, 0))  # (C, rows, fcols)
    c_f = np.fft.rfft2(np.moveaxis(mu / phi, 2, 0))

    def run_chunk(sl: slice) -> np.ndarray:
        chunk = np.moveaxis(patches[sl], 3, 1)  # (q, C, kr, kc)
        padded = _pad_kernels(chunk, rows, cols)
        z_f = np.fft.rfft2(padded)
        padded[..., :kr, :kc] = chunk * chunk
        z2_f = np.fft.rfft2(padded)
        spectrum = (c_f[None] * np.conj(z_f)).sum(axis=1)
        spectrum -= (b_f[None] * np.conj(z2_f)).sum(axis=1)
        corr = np.fft.irfft2(spectrum, s=(rows, cols))
        return corr.reshape(len(corr), -1) + base[None, :]

    results = _map_ordered(run_chunk, _chunk_slices(len(patches)), workers)
    if not results:
        return np.zeros((0, rows * cols))
    return np.vstack(results)


def patch_log_likelihoods(patch, epitome: Epitome, channels=None) -> np.ndarray:
    """Placement scores for one patch via the fast path, shape (L,)."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3:
        raise ValueError(f"expected a (K, K, channels) patch, got shape {patch.shape}")
    return batched_patch_log_likelihoods(patch[None], epitome, channels)[0]


def _descriptor_rows(descriptors) -> np.ndarray:
    if isinstance(descriptors, (list, tuple)):
        descriptors = np.stack([np.asarray(getattr(d, "values", d)) for d in descriptors])
    arr = np.asarray(getattr(descriptors, "values", descriptors), dtype=np.float64)
    return arr


def batched_descriptor_log_likelihoods(descriptors, table: DescriptorEpitome) -> np.ndarray:
    """Diagonal-Gaussian scores of (Q, dims) descriptor rows, shape (Q, L)."""
    rows = _descriptor_rows(descriptors)
    if rows.ndim != 2:
        raise ValueError(f"expected (count, dims) descriptors, got shape {rows.shape}")
    if rows.shape[1] != table.dims:
        raise ValueError(
            f"descriptors have {rows.shape[1]} dims but the table holds {table.dims}"
        )
    inv_phi = 1.0 / table.phi
    const = -0.5 * (
        (LOG_TWO_PI + np.log(table.phi)).sum(axis=1)
        + (table.mu**2 * inv_phi).sum(axis=1)
    )
    cross = rows @ (table.mu * inv_phi).T
    quad = (rows * rows) @ (0.5 * inv_phi).T
    return const[None, :] + cross - quad


def descriptor_log_likelihoods(descriptor, table: DescriptorEpitome) -> np.ndarray:
    """Placement scores of a single descriptor, shape (L,)."""
    values = np.asarray(getattr(descriptor, "values", descriptor), dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a descriptor vector, got shape {values.shape}")
    return batched_descriptor_log_likelihoods(values[None], table)[0]


def combined_log_likelihoods(ll_appearance, ll_descriptor, lam: float):
    """Blend the two score sets: lam * appearance + (1 - lam) * descriptor."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    ll_appearance = np.asarray(ll_appearance, dtype=np.float64)
    ll_descriptor = np.asarray(ll_descriptor, dtype=np.float64)
    if ll_appearance.shape != ll_descriptor.shape:
        raise ValueError(
            f"score shapes differ: {ll_appearance.shape} vs {ll_descriptor.shape}"
        )
    return lam * ll_appearance + (1.0 - lam) * ll_descriptor


def e_step(combined_ll, prior: MappingPrior) -> np.ndarray:
    """Posterior over placements: softmax of log-prior plus log-likelihood.

    The maximum score is subtracted before exponentiation, so arbitrarily
    scaled log-likelihoods stay finite.
    """
    scores = np.asarray(combined_ll, dtype=np.float64) + prior.log_pi
    scores = scores - scores.max()
    post = np.exp(scores)
    post /= post.sum()
    return post


def posterior_table(combined_ll: np.ndarray, prior: MappingPrior) -> PosteriorTable:
    """Row-wise :func:`e_step` over a (Q, L) score matrix."""
    scores = np.asarray(combined_ll, dtype=np.float64) + prior.log_pi[None, :]
    scores = scores - scores.max(axis=1, keepdims=True)
    post = np.exp(scores)
    post /= post.sum(axis=1, keepdims=True)
    return PosteriorTable(post)


def log_marginal_rows(combined_ll: np.ndarray, prior: MappingPrior) -> np.ndarray:
    """Per-patch log marginal: logsumexp over placements of prior + scores."""
    scores = np.asarray(combined_ll, dtype=np.float64) + prior.log_pi[None, :]
    peak = scores.max(axis=1, keepdims=True)
    return peak[:, 0] + np.log(np.exp(scores - peak).sum(axis=1))


def total_log_likelihood(
    patches, descriptors, model: DualEpitome, channels=None, workers: int = 1
) -> float:
    """Objective the trainer reports: sum over patches of the log marginal."""
    patches = _as_patch_batch(patches)
    rows = _descriptor_rows(descriptors)
    if len(rows) != len(patches):
        raise ValueError("patch and descriptor counts differ")
    ll_app = batched_patch_log_likelihoods(patches, model.yiq, channels, workers)
    ll_desc = batched_descriptor_log_likelihoods(rows, model.dsift)
    combined = combined_log_likelihoods(ll_app, ll_desc, model.lam)
    return float(log_marginal_rows(combined, model.prior).sum())
