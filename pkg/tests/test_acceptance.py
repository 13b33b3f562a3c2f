"""End-to-end acceptance checks.

One test per shipping criterion; each docstring states the tolerance and
the time budget it enforces. Run with ``pytest -v`` to get one pass/fail
line per criterion.
"""

import hashlib
import time

import numpy as np

from epicolor.cli import main
from epicolor.colorize import colorize
from epicolor.dsift import patch_descriptor
from epicolor.epitome import m_step, train
from epicolor.imagekit import (
    RasterImage,
    Semantics,
    grayscale_as_luminance,
    rgb_to_yiq,
    yiq_to_rgb,
)
from epicolor.likelihood import (
    batched_patch_log_likelihoods,
    e_step,
    patch_log_likelihoods_naive,
    total_log_likelihood,
)
from epicolor.model import (
    DescriptorEpitome,
    DualEpitome,
    Epitome,
    MappingPrior,
    PosteriorTable,
    TrainConfig,
)
from epicolor.selftest import reference_m_step, reference_patch_log_likelihoods

LEFT_RGB = (0.8, 0.1, 0.1)
RIGHT_RGB = (0.1, 0.1, 0.9)


def _two_region_image(size=32):
    rgb = np.empty((size, size, 3))
    rgb[:, : size // 2] = LEFT_RGB
    rgb[:, size // 2 :] = RIGHT_RGB
    return RasterImage(rgb, Semantics.RGB)


def test_criterion_01_posterior_rows_normalize():
    """1000 random posteriors each sum to 1 within 1e-9, inside 1 second."""
    start = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        length = int(rng.integers(2, 65))
        scores = rng.normal(0.0, float(rng.uniform(1.0, 500.0)), size=length)
        prior = MappingPrior.from_probabilities(rng.uniform(0.01, 1.0, length))
        post = e_step(scores, prior)
        assert post.min() >= 0.0
        worst = max(worst, abs(float(post.sum()) - 1.0))
    elapsed = time.monotonic() - start
    assert worst <= 1e-9, f"worst row-sum error {worst:.3g} exceeds 1e-9"
    assert elapsed < 1.0, f"took {elapsed:.2f}s, budget is 1s"


def test_criterion_02_training_objective_is_monotone():
    """10 EM iterations on a two-region image never lower the objective.

    Tolerance: a decrease is a failure unless it is within 1e-6 relative
    slack or the preceding update logged a floor activation. Budget: 30s.
    """
    start = time.monotonic()
    config = TrainConfig(patch_size=8, omega=0.5, iterations=10, lam=0.5)
    result = train(_two_region_image(), config)
    assert len(result.objectives) >= 2
    for i in range(1, len(result.objectives)):
        before, after = result.objectives[i - 1], result.objectives[i]
        if after < before - 1e-6 * abs(before):
            assert result.floor_activations[i - 1].any, (
                f"objective fell {before:.6f} -> {after:.6f} at iteration {i} "
                "with no floor activation to explain it"
            )
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"took {elapsed:.2f}s, budget is 30s"


def test_criterion_03_scoring_and_update_match_brute_force():
    """Production scoring and update agree with explicit-sum references.

    100 random tiny instances (maps at most 4x4, patches at most 3x3):
    the vectorized naive scorer matches the loop reference within 1e-10
    relative, the FFT scorer matches the naive one within 1e-8 relative,
    and the production update matches its loop reference within 1e-10
    relative. Budget: 10s.
    """
    start = time.monotonic()
    rng = np.random.default_rng(103)
    update_config = TrainConfig(patch_size=2, sift_grid=1, init_noise=0.0)
    for _ in range(100):
        rows = int(rng.integers(2, 5))
        cols = int(rng.integers(2, 5))
        k = int(rng.integers(1, min(rows, cols, 3) + 1))
        count = int(rng.integers(1, 7))
        epitome = Epitome(
            rng.uniform(-1.0, 1.0, (rows, cols, 3)),
            rng.uniform(0.05, 1.5, (rows, cols, 3)),
        )
        batch = rng.uniform(-1.0, 1.0, (count, k, k, 3))
        fast = batched_patch_log_likelihoods(batch, epitome)
        for i in range(count):
            naive = patch_log_likelihoods_naive(batch[i], epitome)
            brute = reference_patch_log_likelihoods(batch[i], epitome.mu, epitome.phi)
            np.testing.assert_allclose(naive, brute, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(fast[i], naive, rtol=1e-8, atol=1e-10)

        placements = rows * cols
        previous = DualEpitome(
            yiq=epitome,
            dsift=DescriptorEpitome(
                rng.uniform(-1.0, 1.0, (placements, 8)),
                rng.uniform(0.05, 1.0, (placements, 8)),
            ),
            prior=MappingPrior.uniform(placements),
            patch_size=k,
            sift_grid=1,
            lam=0.5,
        )
        descriptors = rng.uniform(0.0, 1.0, (count, 8))
        raw = rng.uniform(0.05, 1.0, (count, placements))
        posterior = raw / raw.sum(axis=1, keepdims=True)
        appearance, table, prior, _ = m_step(
            batch, descriptors, PosteriorTable(posterior), previous, update_config
        )
        want = reference_m_step(
            batch,
            descriptors,
            posterior,
            previous.yiq.mu,
            previous.yiq.phi,
            previous.dsift.mu,
            previous.dsift.phi,
            update_config.variance_floor,
        )
        np.testing.assert_allclose(appearance.mu, want[0], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(appearance.phi, want[1], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(table.mu, want[2], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(table.phi, want[3], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(np.exp(prior.log_pi), want[4], rtol=1e-10, atol=1e-12)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.2f}s, budget is 10s"


def test_criterion_04_self_colorization_recovers_chroma():
    """A model recolors its own grayscale reference close to the original.

    Mean absolute error of the I and Q planes each at most 0.05, and at
    least 90% of pixels land nearer their own region's chroma than the
    other region's. Budget: 60s.
    """
    start = time.monotonic()
    reference = _two_region_image()
    config = TrainConfig(patch_size=8, omega=0.5, iterations=20, lam=0.5)
    model = train(reference, config).model
    gray = grayscale_as_luminance(reference)
    out = colorize(gray, model, omega_infer=0.25)

    got = rgb_to_yiq(out).data
    want = rgb_to_yiq(reference).data
    mae_i = float(np.abs(got[:, :, 1] - want[:, :, 1]).mean())
    mae_q = float(np.abs(got[:, :, 2] - want[:, :, 2]).mean())
    assert mae_i <= 0.05, f"I-plane MAE {mae_i:.4f} exceeds 0.05"
    assert mae_q <= 0.05, f"Q-plane MAE {mae_q:.4f} exceeds 0.05"

    left_iq = want[0, 0, 1:]
    right_iq = want[0, -1, 1:]
    d_left = np.linalg.norm(got[:, :, 1:] - left_iq, axis=2)
    d_right = np.linalg.norm(got[:, :, 1:] - right_iq, axis=2)
    truly_left = np.zeros((32, 32), dtype=bool)
    truly_left[:, :16] = True
    correct = np.where(truly_left, d_left <= d_right, d_right <= d_left)
    fraction = float(correct.mean())
    assert fraction >= 0.9, f"only {fraction:.1%} of pixels took the nearer chroma"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"took {elapsed:.2f}s, budget is 60s"


def test_criterion_05_color_space_round_trip():
    """RGB -> YIQ -> RGB on a 17^3 lattice stays within 1e-6, inside 1s."""
    start = time.monotonic()
    axis = np.linspace(0.0, 1.0, 17)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    lattice = np.stack([r, g, b], axis=-1).reshape(17 * 17, 17, 3)
    image = RasterImage(lattice, Semantics.RGB)
    back = yiq_to_rgb(rgb_to_yiq(image))
    worst = float(np.abs(back.data - image.data).max())
    elapsed = time.monotonic() - start
    assert worst <= 1e-6, f"round-trip error {worst:.3g} exceeds 1e-6"
    assert elapsed < 1.0, f"took {elapsed:.2f}s, budget is 1s"


def test_criterion_06_descriptor_invariances():
    """Descriptors over 100 random patches honor the gradient contracts.

    Adding a constant changes nothing (exactly, checked on values built so
    the shift is representable); scaling intensities changes nothing to
    within 1e-12; constant patches give the zero vector. Budget: 1s.
    """
    start = time.monotonic()
    rng = np.random.default_rng(106)
    k, grid = 8, 2
    for _ in range(100):
        # dyadic values keep patch + shift exact in floating point
        patch = rng.integers(0, 33, size=(k, k)).astype(np.float64) / 32.0
        base = patch_descriptor(patch, grid)

        shift = float(rng.integers(1, 9)) / 16.0
        shifted = patch_descriptor(patch + shift, grid)
        np.testing.assert_array_equal(shifted.values, base.values)

        # scale invariance on a generic patch: dyadic grids park gradient
        # angles exactly on bin boundaries, where any rounding flips the
        # bin, so the scale check uses continuous values instead
        smooth = rng.uniform(0.0, 1.0, size=(k, k))
        scale = float(rng.uniform(0.25, 4.0))
        np.testing.assert_allclose(
            patch_descriptor(smooth * scale, grid).values,
            patch_descriptor(smooth, grid).values,
            atol=1e-12,
        )

        flat = patch_descriptor(np.full((k, k), float(rng.uniform(0, 1))), grid)
        np.testing.assert_array_equal(flat.values, np.zeros(8 * grid * grid))
    elapsed = time.monotonic() - start
    assert elapsed < 1.0, f"took {elapsed:.2f}s, budget is 1s"


def test_criterion_07_training_is_deterministic(tmp_path, capsys):
    """Identical commands produce byte-identical models; threads change nothing."""
    from PIL import Image

    ref = tmp_path / "ref.png"
    rgb = np.zeros((32, 32, 3), dtype=np.uint8)
    rgb[:, :16] = (204, 26, 26)
    rgb[:, 16:] = (26, 26, 230)
    Image.fromarray(rgb, mode="RGB").save(ref)

    flags = ["--patch-size", "8", "--iters", "5", "--sift-grid", "3"]
    first = tmp_path / "a.eptm"
    second = tmp_path / "b.eptm"
    assert main(["train", "--ref", str(ref), "--out", str(first), *flags]) == 0
    assert main(["train", "--ref", str(ref), "--out", str(second), *flags]) == 0
    capsys.readouterr()
    assert (
        hashlib.sha256(first.read_bytes()).hexdigest()
        == hashlib.sha256(second.read_bytes()).hexdigest()
    ), "two identical train commands wrote different model bytes"

    config = dict(patch_size=8, omega=0.5, iterations=5, lam=0.5)
    serial = train(_two_region_image(), TrainConfig(**config, workers=1))
    threaded = train(_two_region_image(), TrainConfig(**config, workers=4))
    np.testing.assert_array_equal(serial.model.yiq.mu, threaded.model.yiq.mu)
    np.testing.assert_array_equal(serial.model.yiq.phi, threaded.model.yiq.phi)
    np.testing.assert_array_equal(serial.model.dsift.mu, threaded.model.dsift.mu)
    np.testing.assert_array_equal(serial.model.dsift.phi, threaded.model.dsift.phi)
    np.testing.assert_array_equal(
        serial.model.prior.log_pi, threaded.model.prior.log_pi
    )
    assert serial.objectives == threaded.objectives


def test_criterion_08_toroidal_relabeling_is_invisible():
    """Rolling the map and permuting the prior moves the total by <= 1e-10."""
    rng = np.random.default_rng(108)
    for _ in range(20):
        rows = int(rng.integers(3, 7))
        cols = int(rng.integers(3, 7))
        k = int(rng.integers(1, 4))
        count = rows * cols
        model = DualEpitome(
            yiq=Epitome(
                rng.uniform(-1, 1, (rows, cols, 3)),
                rng.uniform(0.05, 1.0, (rows, cols, 3)),
            ),
            dsift=DescriptorEpitome(
                rng.uniform(-1, 1, (count, 8)), rng.uniform(0.1, 1.0, (count, 8))
            ),
            prior=MappingPrior.from_probabilities(rng.uniform(0.1, 1.0, count)),
            patch_size=k,
            sift_grid=1,
            lam=0.5,
        )
        dr = int(rng.integers(1, rows))
        dc = int(rng.integers(1, cols))
        perm = np.array(
            [((l // cols + dr) % rows) * cols + (l % cols + dc) % cols for l in range(count)]
        )
        moved_desc_mu = np.empty_like(model.dsift.mu)
        moved_desc_phi = np.empty_like(model.dsift.phi)
        moved_log_pi = np.empty(count)
        moved_desc_mu[perm] = model.dsift.mu
        moved_desc_phi[perm] = model.dsift.phi
        moved_log_pi[perm] = model.prior.log_pi
        moved = DualEpitome(
            yiq=Epitome(
                np.roll(model.yiq.mu, (dr, dc), axis=(0, 1)),
                np.roll(model.yiq.phi, (dr, dc), axis=(0, 1)),
            ),
            dsift=DescriptorEpitome(moved_desc_mu, moved_desc_phi),
            prior=MappingPrior(moved_log_pi),
            patch_size=k,
            sift_grid=1,
            lam=0.5,
        )
        patches = rng.uniform(-1, 1, (4, k, k, 3))
        descriptors = rng.uniform(0, 1, (4, 8))
        base = total_log_likelihood(patches, descriptors, model)
        after = total_log_likelihood(patches, descriptors, moved)
        assert abs(after - base) <= 1e-10 * max(1.0, abs(base)), (
            f"total moved from {base!r} to {after!r} under relabeling"
        )


def test_criterion_09_training_speed_and_fast_path_speedup():
    """A 64x64 reference trains with default-size patches inside 5 minutes,
    and the FFT likelihood path beats the naive path by at least 3x on a
    32x32 map (1024 placements)."""
    start = time.monotonic()
    rng = np.random.default_rng(109)
    hi = np.clip(
        0.5 + 0.25 * np.sin(np.linspace(0, 6 * np.pi, 64))[:, None]
        + 0.2 * rng.standard_normal((64, 64)),
        0.0,
        1.0,
    )
    rgb = np.stack([hi, np.roll(hi, 7, axis=1), 1.0 - hi], axis=-1)
    reference = RasterImage(rgb, Semantics.RGB)
    train(reference, TrainConfig(patch_size=12, iterations=20))
    train_elapsed = time.monotonic() - start
    assert train_elapsed < 300.0, f"training took {train_elapsed:.1f}s, budget is 300s"

    epitome = Epitome(
        rng.uniform(-1, 1, (32, 32, 3)), rng.uniform(0.05, 1.0, (32, 32, 3))
    )
    batch = rng.uniform(-1, 1, (8, 12, 12, 3))

    fast_start = time.perf_counter()
    fast = batched_patch_log_likelihoods(batch, epitome)
    fast_elapsed = time.perf_counter() - fast_start

    naive_start = time.perf_counter()
    naive = np.stack([patch_log_likelihoods_naive(p, epitome) for p in batch])
    naive_elapsed = time.perf_counter() - naive_start

    np.testing.assert_allclose(fast, naive, rtol=1e-8, atol=1e-10)
    speedup = naive_elapsed / fast_elapsed
    assert speedup >= 3.0, (
        f"fast path only {speedup:.1f}x faster ({fast_elapsed:.4f}s vs "
        f"{naive_elapsed:.4f}s) at 1024 placements"
    )
