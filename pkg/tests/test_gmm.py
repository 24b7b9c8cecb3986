"""Tests for Gaussian-mixture priors."""

import math

import numpy as np
import pytest

from src.gmm import (
    GmmPrior,
    assign_class,
    default_prior,
    load_prior,
    prior_from_text,
    prior_to_text,
    responsibilities,
    responsibility_matrix,
    sample,
    save_prior,
)
from src.settings import EMOTION_CLASSES


@pytest.fixture
def two_component_prior():
    return GmmPrior(np.array([[-1.0], [1.0]]), np.ones((2, 1)), np.array([1.0, 1.0]), ("left", "right"))


class TestGmmPrior:
    """Tests for prior construction and validation."""

    def test_default_prior_geometry(self):
        prior = default_prior()
        assert prior.class_names == tuple(EMOTION_CLASSES)
        assert prior.dim == 2
        np.testing.assert_allclose(np.linalg.norm(prior.means, axis=1), 4.0)
        np.testing.assert_allclose(prior.covariances, 0.25)
        assert prior.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_weights_renormalized(self):
        prior = GmmPrior(np.zeros((2, 1)), np.ones((2, 1)), np.array([2.0, 6.0]), ("a", "b"))
        np.testing.assert_allclose(prior.weights, [0.25, 0.75])

    def test_rejects_bad_covariance(self):
        with pytest.raises(ValueError, match="Covariance"):
            GmmPrior(np.zeros((1, 2)), np.array([[1.0, 0.0]]), np.ones(1), ("a",))

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError, match="distinct"):
            GmmPrior(np.zeros((2, 1)), np.ones((2, 1)), np.ones(2), ("a", "a"))

    def test_arrays_read_only(self):
        prior = default_prior()
        with pytest.raises(ValueError):
            prior.means[0, 0] = 1.0


class TestSample:
    """Tests for sampling."""

    def test_single_component_mean(self):
        prior = GmmPrior(np.array([[2.0, -3.0]]), np.array([[0.25, 4.0]]), np.ones(1), ("only",))
        points, indices = sample(prior, 1000, seed=0)
        sigma = np.sqrt(prior.covariances[0])
        assert np.all(np.abs(points.mean(axis=0) - prior.means[0]) < 5 * sigma / math.sqrt(1000))
        assert np.all(indices == 0)

    def test_forced_component(self):
        _, indices = sample(default_prior(), 50, seed=1, component=2)
        assert np.all(indices == 2)

    def test_equal_weight_counts(self):
        _, indices = sample(default_prior(), 4000, seed=2)
        counts = np.bincount(indices, minlength=4)
        assert np.all((counts >= 820) & (counts <= 1180))

    def test_invalid_component(self):
        with pytest.raises(ValueError, match="out of range"):
            sample(default_prior(), 5, seed=0, component=4)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            sample(default_prior(), 0, seed=0)

    def test_reproducible(self):
        a, _ = sample(default_prior(), 20, seed=7)
        b, _ = sample(default_prior(), 20, seed=7)
        np.testing.assert_array_equal(a, b)


class TestResponsibilities:
    """Tests for posterior membership."""

    def test_point_at_mean(self):
        prior = default_prior()
        for k in range(4):
            assert responsibilities(prior, prior.means[k])[k] > 0.999

    def test_symmetric_point(self, two_component_prior):
        np.testing.assert_allclose(responsibilities(two_component_prior, np.array([0.0])), [0.5, 0.5], atol=1e-12)

    def test_hand_computed(self, two_component_prior):
        x = 0.5
        left = -0.5 * (x + 1.0) ** 2
        right = -0.5 * (x - 1.0) ** 2
        expected = np.exp([left, right]) / np.exp([left, right]).sum()
        np.testing.assert_allclose(responsibilities(two_component_prior, np.array([x])), expected, atol=1e-12)

    def test_rows_sum_to_one(self):
        points = np.random.default_rng(0).normal(scale=5.0, size=(100, 2))
        np.testing.assert_allclose(responsibility_matrix(default_prior(), points).sum(axis=1), 1.0, atol=1e-9)

    def test_permutation_equivariant(self):
        prior = default_prior()
        order = [2, 0, 3, 1]
        permuted = GmmPrior(prior.means[order], prior.covariances[order], prior.weights[order],
                            tuple(prior.class_names[k] for k in order))
        point = np.array([1.3, -0.7])
        np.testing.assert_allclose(responsibilities(permuted, point), responsibilities(prior, point)[order],
                                   atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            responsibilities(default_prior(), np.zeros(3))


class TestAssignClass:
    """Tests for highest-membership labelling."""

    def test_means_map_to_classes(self):
        prior = default_prior()
        assert assign_class(prior, prior.means) == list(EMOTION_CLASSES)

    def test_tie_goes_to_lowest_index(self, two_component_prior):
        assert assign_class(two_component_prior, np.array([[0.0]])) == ["left"]

    def test_component_samples(self):
        prior = default_prior()
        points, _ = sample(prior, 200, seed=3, component=2)
        labels = assign_class(prior, points)
        assert labels.count(EMOTION_CLASSES[2]) >= 195

    def test_weight_scale_invariant(self):
        prior = default_prior()
        scaled = GmmPrior(prior.means, prior.covariances, prior.weights * 7.0, prior.class_names)
        points = np.random.default_rng(1).normal(scale=4.0, size=(50, 2))
        assert assign_class(prior, points) == assign_class(scaled, points)


class TestSerialization:
    """Tests for the key-value prior format."""

    def test_round_trip_exact(self, tmp_path):
        prior = GmmPrior(np.array([[0.1, 1 / 3], [-2.0, 7.25]]), np.array([[0.3, 0.7], [1.1, 2.0]]),
                         np.array([0.3, 0.7]), ("x", "y"))
        path = tmp_path / "prior.txt"
        save_prior(prior, path)
        assert load_prior(path) == prior

    def test_text_lists_components(self):
        text = prior_to_text(default_prior())
        assert "dimension = 2" in text
        assert "component.3.class = happy" in text

    def test_missing_key(self):
        with pytest.raises(ValueError, match="missing key"):
            prior_from_text("dimension = 2\ncomponents = 1\n")
