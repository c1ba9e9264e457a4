import math
from unittest import TestCase

import numpy as np
import pytest

from masksembles.data import Dataset
from masksembles.data import corrupt_gaussian
from masksembles.data import gen_blobs
from masksembles.data import gen_ood_grid
from masksembles.data import gen_two_sinusoids
from masksembles.errors import ValidationError


class TestDataset(TestCase):
    def test_rejects_non_finite_features(self):
        with pytest.raises(ValidationError, match='finite'):
            Dataset(np.array([[np.nan, 1.0]]), np.array([0]))

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(ValidationError, match='labels length'):
            Dataset(np.zeros((3, 2)), np.array([0, 1]))

    def test_rejects_negative_labels(self):
        with pytest.raises(ValidationError):
            Dataset(np.zeros((2, 2)), np.array([0, -1]))

    def test_counts(self):
        dataset = Dataset(np.zeros((4, 3)), np.array([0, 1, 2, 1]))
        assert len(dataset) == 4
        assert dataset.num_features == 3
        assert dataset.num_classes == 3


class TestTwoSinusoids(TestCase):
    def test_noise_free_points_lie_on_the_curves(self):
        dataset = gen_two_sinusoids(50, noise_sigma=0.0, seed=3)
        x, y = dataset.features[:, 0], dataset.features[:, 1]
        offsets = np.where(dataset.labels == 0, 1.0, -1.0)
        assert np.max(np.abs(y - np.sin(x) - offsets)) <= 1e-12

    def test_balanced_and_in_range(self):
        dataset = gen_two_sinusoids(30, seed=1)
        assert len(dataset) == 60
        assert np.bincount(dataset.labels).tolist() == [30, 30]
        assert dataset.features[:, 0].min() >= -5.0
        assert dataset.features[:, 0].max() <= 5.0
        assert dataset.meta['x_range'] == (-5.0, 5.0)

    def test_deterministic_per_seed(self):
        first, second = gen_two_sinusoids(20, seed=4), gen_two_sinusoids(20, seed=4)
        assert first.features.tobytes() == second.features.tobytes()
        assert not np.array_equal(first.features, gen_two_sinusoids(20, seed=5).features)

    def test_noise_is_centered(self):
        count = 100000
        dataset = gen_two_sinusoids(count, noise_sigma=0.3, seed=2, offsets=(0.0,))
        noise = dataset.features[:, 1] - np.sin(dataset.features[:, 0])
        assert abs(noise.mean()) <= 3 * 0.3 / math.sqrt(count)

    def test_validation(self):
        with pytest.raises(ValidationError, match='count_per_class'):
            gen_two_sinusoids(0)
        with pytest.raises(ValidationError, match='noise_sigma'):
            gen_two_sinusoids(5, noise_sigma=-1.0)
        with pytest.raises(ValidationError, match='nonempty interval'):
            gen_two_sinusoids(5, x_range=(1.0, 1.0))


class TestBlobs(TestCase):
    def test_shape_and_centers(self):
        dataset = gen_blobs(500, sigma=0.1, seed=1)
        assert dataset.features.shape == (1000, 2)
        assert np.allclose(dataset.features[dataset.labels == 0].mean(axis=0), [-2.0, 0.0], atol=0.05)
        assert np.allclose(dataset.features[dataset.labels == 1].mean(axis=0), [2.0, 0.0], atol=0.05)


class TestOodGrid(TestCase):
    def test_two_by_two_is_the_corners(self):
        grid = gen_ood_grid((-10.0, 10.0), (-4.0, 4.0), 2)
        assert grid.features.tolist() == [[-10.0, -4.0], [10.0, -4.0], [-10.0, 4.0], [10.0, 4.0]]
        assert grid.labels is None
        assert not grid.in_distribution.any()

    def test_in_distribution_band(self):
        grid = gen_ood_grid((-10.0, 10.0), (-4.0, 4.0), 41)
        inside = np.abs(grid.features[:, 0]) <= 5.0
        assert np.array_equal(grid.in_distribution, inside)
        assert grid.in_distribution.any() and not grid.in_distribution.all()

    def test_uniform_spacing(self):
        grid = gen_ood_grid((-10.0, 10.0), (-4.0, 4.0), (21, 9))
        xs = np.unique(grid.features[:, 0])
        ys = np.unique(grid.features[:, 1])
        assert len(xs) == 21 and len(ys) == 9
        assert np.max(np.abs(np.diff(xs) - 1.0)) <= 1e-12
        assert np.max(np.abs(np.diff(ys) - 1.0)) <= 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError, match='resolution'):
            gen_ood_grid(resolution=1)
        with pytest.raises(ValidationError, match='strictly contain'):
            gen_ood_grid((-5.0, 5.0), (-4.0, 4.0), 5)
        with pytest.raises(ValidationError):
            gen_ood_grid((-10.0, 10.0), (4.0, -4.0), 5)


class TestCorruption(TestCase):
    def setUp(self):
        self.dataset = gen_two_sinusoids(50, seed=1)

    def test_severity_zero_is_identity(self):
        corrupted = corrupt_gaussian(self.dataset, 0, seed=1)
        assert corrupted.features.tobytes() == self.dataset.features.tobytes()
        assert corrupted.features is not self.dataset.features

    def test_labels_and_shape_are_kept(self):
        for severity in range(6):
            corrupted = corrupt_gaussian(self.dataset, severity, seed=1)
            assert corrupted.features.shape == self.dataset.features.shape
            assert np.array_equal(corrupted.labels, self.dataset.labels)
            assert corrupted.meta['severity'] == severity

    def test_noise_variance_scales_with_severity(self):
        base = Dataset(np.zeros((50000, 2)), None)
        corrupted = corrupt_gaussian(base, 5, seed=3, base_sigma=0.1)
        variance = corrupted.features.var()
        assert abs(variance - 25 * 0.01) <= 0.05 * 25 * 0.01

    def test_default_base_sigma(self):
        corrupted = corrupt_gaussian(self.dataset, 1, seed=1)
        assert corrupted.meta['base_sigma'] == pytest.approx(0.2 * self.dataset.features.std())

    def test_severity_out_of_range(self):
        with pytest.raises(ValidationError, match='severity'):
            corrupt_gaussian(self.dataset, 6)
        with pytest.raises(ValidationError):
            corrupt_gaussian(self.dataset, -1)
