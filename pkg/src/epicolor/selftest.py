"""Built-in self checks against independent reference implementations.

The reference code here recomputes placement likelihoods and the EM update
with explicit Python loops and its own coordinate arithmetic, sharing no
helpers with the production paths it validates. ``run_selftest`` exercises
the production code against these references on small random instances and
reports one line per property.

The fault-injection switch flips a sign inside the reference variance
update, which must make the suite fail; it exists as a negative control
proving the checks can actually detect a broken update.
"""

from __future__ import annotations

import math

import numpy as np

from .likelihood import (
    batched_patch_log_likelihoods,
    e_step,
    patch_log_likelihoods_naive,
)
from .model import (
    DescriptorEpitome,
    DualEpitome,
    Epitome,
    MappingPrior,
    PosteriorTable,
    TrainConfig,
)
from .epitome import WEIGHT_EPS, m_step


def reference_patch_log_likelihoods(patch, mu, phi) -> np.ndarray:
    """Brute-force placement scores: loop every placement, offset, channel."""
    patch = np.asarray(patch, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    rows, cols, chans = mu.shape
    kr, kc = patch.shape[0], patch.shape[1]
    out = np.zeros(rows * cols)
    for mapping in range(rows * cols):
        top, left = mapping // cols, mapping % cols
        total = 0.0
        for dr in range(kr):
            for dc in range(kc):
                r = (top + dr) % rows
                c = (left + dc) % cols
                for ch in range(chans):
                    m = mu[r, c, ch]
                    v = phi[r, c, ch]
                    z = patch[dr, dc, ch]
                    total += -0.5 * math.log(2.0 * math.pi * v) - (z - m) ** 2 / (2.0 * v)
        out[mapping] = total
    return out


def reference_m_step(
    patches,
    descriptors,
    posterior,
    prev_mu,
    prev_phi,
    prev_desc_mu,
    prev_desc_phi,
    variance_floor: float,
    prior_floor: float = 1e-12,
    fault_sign: float = 1.0,
):
    """Brute-force EM update: explicit sums over every (patch, offset, placement).

    ``fault_sign`` multiplies the mean inside the variance residual; any
    value other than 1.0 deliberately corrupts the update (negative
    control for the self-test).
    """
    patches = np.asarray(patches, dtype=np.float64)
    q = np.asarray(posterior, dtype=np.float64)
    rows, cols, chans = prev_mu.shape
    total, kr, kc = patches.shape[0], patches.shape[1], patches.shape[2]

    num = np.zeros((rows, cols, chans))
    den = np.zeros((rows, cols))
    for k in range(total):
        for mapping in range(rows * cols):
            weight = q[k, mapping]
            top, left = mapping // cols, mapping % cols
            for dr in range(kr):
                for dc in range(kc):
                    r = (top + dr) % rows
                    c = (left + dc) % cols
                    den[r, c] += weight
                    for ch in range(chans):
                        num[r, c, ch] += weight * patches[k, dr, dc, ch]

    mu = prev_mu.copy()
    covered = den > WEIGHT_EPS * max(1.0, total)
    for r in range(rows):
        for c in range(cols):
            if covered[r, c]:
                mu[r, c] = num[r, c] / den[r, c]

    resid = np.zeros((rows, cols, chans))
    for k in range(total):
        for mapping in range(rows * cols):
            weight = q[k, mapping]
            top, left = mapping // cols, mapping % cols
            for dr in range(kr):
                for dc in range(kc):
                    r = (top + dr) % rows
                    c = (left + dc) % cols
                    for ch in range(chans):
                        delta = patches[k, dr, dc, ch] - fault_sign * mu[r, c, ch]
                        resid[r, c, ch] += weight * delta * delta

    phi = prev_phi.copy()
    for r in range(rows):
        for c in range(cols):
            if covered[r, c]:
                phi[r, c] = resid[r, c] / den[r, c]
    phi = np.maximum(phi, variance_floor)

    desc = np.asarray(descriptors, dtype=np.float64)
    dims = desc.shape[1]
    desc_mu = prev_desc_mu.copy()
    desc_phi = prev_desc_phi.copy()
    for mapping in range(rows * cols):
        mass = 0.0
        for k in range(total):
            mass += q[k, mapping]
        if mass <= WEIGHT_EPS:
            continue
        for j in range(dims):
            acc = 0.0
            for k in range(total):
                acc += q[k, mapping] * desc[k, j]
            desc_mu[mapping, j] = acc / mass
        for j in range(dims):
            acc = 0.0
            for k in range(total):
                delta = desc[k, j] - fault_sign * desc_mu[mapping, j]
                acc += q[k, mapping] * delta * delta
            desc_phi[mapping, j] = acc / mass
    desc_phi = np.maximum(desc_phi, variance_floor)

    pi = np.array([q[:, mapping].sum() / total for mapping in range(rows * cols)])
    pi = np.maximum(pi, prior_floor)
    pi = pi / pi.sum()

    return mu, phi, desc_mu, desc_phi, pi


def _random_epitome(rng, rows, cols, chans) -> Epitome:
    mu = rng.uniform(-1.0, 1.0, size=(rows, cols, chans))
    phi = rng.uniform(0.05, 1.5, size=(rows, cols, chans))
    return Epitome(mu, phi)


def _random_posterior(rng, count, placements) -> np.ndarray:
    raw = rng.uniform(0.1, 1.0, size=(count, placements))
    return raw / raw.sum(axis=1, keepdims=True)


def _check_posterior_normalization(rng) -> bool:
    for _ in range(200):
        length = int(rng.integers(2, 64))
        scale = float(rng.uniform(1.0, 500.0))
        scores = rng.normal(0.0, scale, size=length)
        prior = MappingPrior.from_probabilities(rng.uniform(0.01, 1.0, size=length))
        post = e_step(scores, prior)
        if abs(post.sum() - 1.0) > 1e-12 or post.min() < 0.0:
            return False
    return True


def _check_naive_vs_reference(rng) -> bool:
    for _ in range(30):
        rows = int(rng.integers(2, 5))
        cols = int(rng.integers(2, 5))
        k = int(rng.integers(1, min(rows, cols) + 1))
        epitome = _random_epitome(rng, rows, cols, 3)
        patch = rng.uniform(-1.0, 1.0, size=(k, k, 3))
        got = patch_log_likelihoods_naive(patch, epitome)
        want = reference_patch_log_likelihoods(patch, epitome.mu, epitome.phi)
        if not np.allclose(got, want, rtol=1e-10, atol=1e-12):
            return False
    return True


def _check_fast_vs_naive(rng) -> bool:
    for _ in range(30):
        rows = int(rng.integers(2, 7))
        cols = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(rows, cols) + 1))
        count = int(rng.integers(1, 5))
        epitome = _random_epitome(rng, rows, cols, 3)
        batch = rng.uniform(-1.0, 1.0, size=(count, k, k, 3))
        fast = batched_patch_log_likelihoods(batch, epitome)
        for i in range(count):
            naive = patch_log_likelihoods_naive(batch[i], epitome)
            if not np.allclose(fast[i], naive, rtol=1e-8, atol=1e-10):
                return False
    return True


def _check_m_step(rng, fault_sign: float) -> bool:
    config = TrainConfig(patch_size=2, sift_grid=1, init_noise=0.0)
    for _ in range(30):
        rows = int(rng.integers(2, 4))
        cols = int(rng.integers(2, 4))
        k = int(rng.integers(1, min(rows, cols) + 1))
        count = int(rng.integers(1, 4))
        dims = 8
        epitome = _random_epitome(rng, rows, cols, 3)
        table = DescriptorEpitome(
            rng.uniform(-1.0, 1.0, size=(rows * cols, dims)),
            rng.uniform(0.05, 1.0, size=(rows * cols, dims)),
        )
        model = DualEpitome(
            yiq=epitome,
            dsift=table,
            prior=MappingPrior.uniform(rows * cols),
            patch_size=k,
            sift_grid=1,
            lam=0.5,
        )
        patches = rng.uniform(-1.0, 1.0, size=(count, k, k, 3))
        descriptors = rng.uniform(0.0, 1.0, size=(count, dims))
        posterior = _random_posterior(rng, count, rows * cols)

        got_ep, got_table, got_prior, _ = m_step(
            patches, descriptors, PosteriorTable(posterior), model, config
        )
        want = reference_m_step(
            patches,
            descriptors,
            posterior,
            epitome.mu,
            epitome.phi,
            table.mu,
            table.phi,
            config.variance_floor,
            fault_sign=fault_sign,
        )
        checks = (
            np.allclose(got_ep.mu, want[0], rtol=1e-10, atol=1e-12),
            np.allclose(got_ep.phi, want[1], rtol=1e-10, atol=1e-12),
            np.allclose(got_table.mu, want[2], rtol=1e-10, atol=1e-12),
            np.allclose(got_table.phi, want[3], rtol=1e-10, atol=1e-12),
            np.allclose(np.exp(got_prior.log_pi), want[4], rtol=1e-10, atol=1e-12),
        )
        if not all(checks):
            return False
    return True


def run_selftest(inject_fault: bool = False, out=print) -> bool:
    """Run the oracle suite; returns True when every property holds."""
    rng = np.random.default_rng(20240615)
    fault_sign = -1.0 if inject_fault else 1.0
    checks = [
        ("posterior rows normalized", lambda: _check_posterior_normalization(rng)),
        ("naive likelihood matches reference", lambda: _check_naive_vs_reference(rng)),
        ("fast likelihood matches naive", lambda: _check_fast_vs_naive(rng)),
        ("m-step matches reference", lambda: _check_m_step(rng, fault_sign)),
    ]
    all_ok = True
    for name, check in checks:
        ok = check()
        all_ok = all_ok and ok
        out(f"{name}: {'PASS' if ok else 'FAIL'}")
    return all_ok
