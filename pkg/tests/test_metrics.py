import math

import numpy as np
import pytest

from ivegan.data import RingSpec, ring_means, sample_ring
from ivegan.errors import ShapeError
from ivegan.metrics import (
    assign_mode,
    assign_modes,
    coverage,
    density_grid,
    jsd_histogram,
    latent_knn_agreement,
    reconstruction_error,
    representation_report,
)
from ivegan.model import create_model, mnist_lite_architecture

SPEC = RingSpec()


class _Identity:
    def reconstruct(self, x, rng):
        return np.array(x, copy=True)


def test_assign_mode_hits_and_misses():
    means = ring_means(SPEC)
    assert assign_mode(means[3], means, SPEC.sigma) == 3
    far = means[3] * (1 + 4 * SPEC.sigma / SPEC.radius)
    assert assign_mode(far, means, SPEC.sigma, k=3) is None
    assert assign_mode(far, means, SPEC.sigma, k=5) == 3


def test_assign_mode_breaks_ties_low():
    means = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert assign_mode(np.zeros(2), means, sigma=1.0, k=1.0) == 0


def test_assign_modes_agrees_with_brute_force():
    gen = np.random.default_rng(0)
    points = gen.uniform(-1.2, 1.2, size=(10_000, 2))
    means = ring_means(SPEC)
    got = assign_modes(points, means, 0.1, k=3)
    for p, m in zip(points[:500], got[:500]):
        d = [np.hypot(*(p - mu)) for mu in means]
        best = int(np.argmin(d))
        assert m == (best if d[best] <= 0.3 else -1)
    assert set(np.unique(got)) <= set(range(-1, 8))


def test_assign_modes_validation():
    with pytest.raises(ValueError):
        assign_modes(np.zeros((1, 2)), ring_means(SPEC), 0.1, k=0)
    with pytest.raises(ValueError):
        assign_modes(np.zeros((1, 2)), np.zeros((0, 2)), 0.1)


def test_assign_modes_rejects_the_wrong_width():
    with pytest.raises(ShapeError):
        assign_modes(np.zeros((5, 4)), ring_means(SPEC), 0.1)
    with pytest.raises(ShapeError):
        assign_mode(np.zeros(3), ring_means(SPEC), 0.1)


def test_true_samples_cover_all_modes():
    samples = sample_ring(SPEC, 5000, np.random.default_rng(0))
    report = coverage(samples, SPEC, rng=np.random.default_rng(1))
    assert report.covered_modes == 8
    assert report.assigned_fraction > 0.99
    assert sum(report.per_mode_counts) <= report.n_samples
    assert report.jsd < 0.1


def test_collapsed_samples_cover_one_mode():
    samples = np.tile(ring_means(SPEC)[0], (2000, 1))
    report = coverage(samples, SPEC, rng=np.random.default_rng(0))
    assert report.covered_modes == 1
    assert report.shares()[0] == 1.0
    assert "1 / 8" in report.summary()


def test_far_samples_cover_nothing():
    report = coverage(np.zeros((1000, 2)), SPEC, rng=np.random.default_rng(0))
    assert report.covered_modes == 0
    assert report.assigned_fraction == 0.0


def test_samples_outside_the_grid_count_as_maximal_divergence():
    report = coverage(np.full((1000, 2), 5.0), SPEC, rng=np.random.default_rng(0))
    assert report.jsd == pytest.approx(math.log(2.0))


def test_coverage_is_permutation_invariant():
    samples = sample_ring(SPEC, 3000, np.random.default_rng(0))
    shuffled = np.random.default_rng(1).permutation(samples)
    a = coverage(samples, SPEC, rng=np.random.default_rng(2))
    b = coverage(shuffled, SPEC, rng=np.random.default_rng(2))
    assert a == b


def test_coverage_input_checks():
    with pytest.raises(ValueError):
        coverage(np.zeros((999, 2)), SPEC)
    with pytest.raises(ShapeError):
        coverage(np.zeros((1000, 3)), SPEC)


def test_jsd_bounds():
    a = sample_ring(SPEC, 2000, np.random.default_rng(0))
    assert jsd_histogram(a, a) == 0.0
    left = np.full((100, 2), -1.0)
    right = np.full((100, 2), 1.0)
    assert jsd_histogram(left, right) == pytest.approx(math.log(2.0), abs=1e-12)
    b = sample_ring(SPEC, 2000, np.random.default_rng(1))
    assert jsd_histogram(a, b) == pytest.approx(jsd_histogram(b, a), abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_jsd_between_true_samples_is_small(seed):
    a = sample_ring(SPEC, 10_000, np.random.default_rng(2 * seed))
    b = sample_ring(SPEC, 10_000, np.random.default_rng(2 * seed + 1))
    assert jsd_histogram(a, b) < 0.05


def test_jsd_counts_mass_outside_the_grid():
    inside = np.zeros((1000, 2))
    half_out = np.concatenate([np.zeros((1000, 2)), np.full((1000, 2), 5.0)])
    assert jsd_histogram(half_out, inside) > 0.1
    assert jsd_histogram(np.full((10, 2), 5.0), np.zeros((10, 2))) == pytest.approx(math.log(2.0))
    assert jsd_histogram(np.full((10, 2), 5.0), np.full((20, 2), -7.0)) == 0.0
    with pytest.raises(ValueError):
        jsd_histogram(np.zeros((0, 2)), inside)


def test_density_grid_is_laid_out_as_an_image():
    grid = density_grid(np.array([[1.0, 1.0], [-1.0, -1.0], [-1.0, -1.0]]), bins=4)
    assert grid.counts[0, 3] == 1
    assert grid.counts[3, 0] == 2
    assert grid.total == 3 and grid.dropped == 0


def test_density_grid_conserves_counts():
    gen = np.random.default_rng(0)
    samples = gen.uniform(-2.0, 2.0, size=(5000, 2))
    grid = density_grid(samples)
    assert grid.total + grid.dropped == 5000
    assert grid.dropped > 0
    single = density_grid(np.array([[0.1, 0.2]]))
    assert np.count_nonzero(single.counts) == 1
    with pytest.raises(ValueError):
        density_grid(samples, bins=1)


def test_density_grid_uniform_counts():
    n, bins = 100_000, 16
    samples = np.random.default_rng(3).uniform(-1.2, 1.2, size=(n, 2))
    counts = density_grid(samples, bins=bins).counts
    expected = n / bins**2
    assert np.abs(counts - expected).max() < 5 * math.sqrt(expected)


def test_knn_agreement_on_separated_clusters():
    gen = np.random.default_rng(0)
    centres = np.eye(3) * 10
    labels = np.repeat(np.arange(3), 10)
    latents = centres[labels] + 0.01 * gen.standard_normal((30, 3))
    assert latent_knn_agreement(latents, labels, k=5) == 1.0


def test_knn_agreement_survives_rotation():
    gen = np.random.default_rng(1)
    latents = gen.standard_normal((200, 2))
    labels = (latents[:, 0] > 0).astype(int) + 2 * (gen.random(200) < 0.2)
    theta = 0.7
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = latent_knn_agreement(latents, labels, k=5)
    b = latent_knn_agreement(latents @ rot.T, labels, k=5)
    assert a == b


def test_knn_agreement_near_chance_for_shuffled_labels():
    gen = np.random.default_rng(2)
    latents = gen.standard_normal((2000, 3))
    labels = gen.integers(0, 10, size=2000)
    assert abs(latent_knn_agreement(latents, labels, k=5) - 0.1) < 0.06


def test_knn_agreement_validation():
    with pytest.raises(ValueError):
        latent_knn_agreement(np.zeros((5, 2)), np.zeros(5), k=5)
    with pytest.raises(ShapeError):
        latent_knn_agreement(np.zeros((5, 2)), np.zeros(4), k=2)


def test_reconstruction_error_of_identity_is_zero():
    xs = np.random.default_rng(0).random((12, 4))
    err = reconstruction_error(_Identity(), xs, np.random.default_rng(1))
    assert err.per_sample.shape == (12,)
    assert err.mean == 0.0
    assert err.mismatched_mean > 0.0
    with pytest.raises(ValueError):
        reconstruction_error(_Identity(), np.zeros((0, 4)), np.random.default_rng(1))


def test_representation_report_fields():
    arch = mnist_lite_architecture(hidden=(16,), disc_hidden=(8,), data_dim=36)
    model = create_model(arch, np.random.default_rng(0))
    gen = np.random.default_rng(1)
    images = gen.random((30, 36))
    labels = np.arange(30) % 3
    report = representation_report(model, images, labels, np.random.default_rng(2), k=3)
    assert report.n_samples == 30
    assert 0.0 <= report.knn_agreement <= 1.0
    assert report.reconstruction_l2 > 0.0
    assert set(report.to_dict()) >= {"knn_agreement", "reconstruction_gap"}
