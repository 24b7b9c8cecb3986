"""Tests for the SMO-trained RBF SVM."""

import itertools
import math

import numpy as np
import pytest

from src.corpus import Normalizer
from src.svm import (
    BinaryMachine,
    SvmModel,
    decision_values,
    default_gamma,
    dual_objective,
    gram_matrix,
    predict,
    rbf_kernel,
    solve_binary,
    train_svm,
)


def _clusters(centers, per_class, scale, seed):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for name, center in centers.items():
        rows.append(rng.normal(center, scale, size=(per_class, len(center))))
        labels.extend([name] * per_class)
    return np.vstack(rows), labels


def _active_set_optimum(kernel, y, C):
    """Smallest dual objective over every assignment of multipliers to {0, free, C}."""
    n = len(y)
    q = np.outer(y, y) * kernel
    best = np.inf
    for assignment in itertools.product((0, 1, 2), repeat=n):
        state = np.array(assignment)
        free = np.flatnonzero(state == 1)
        alpha = np.where(state == 2, C, 0.0)
        if free.size:
            fixed = np.flatnonzero(state != 1)
            system = np.zeros((free.size + 1, free.size + 1))
            system[:-1, :-1] = q[np.ix_(free, free)]
            system[:-1, -1] = y[free]
            system[-1, :-1] = y[free]
            rhs = np.ones(free.size + 1)
            rhs[:-1] -= q[np.ix_(free, fixed)] @ alpha[fixed]
            rhs[-1] = -y[fixed] @ alpha[fixed]
            solution = np.linalg.solve(system, rhs)
            alpha[free] = solution[:-1]
        if np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12) or abs(y @ alpha) > 1e-9:
            continue
        best = min(best, dual_objective(alpha, y, kernel))
    return best


class TestKernel:
    """Tests for RBF kernel values."""

    def test_identical_points(self):
        assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0

    def test_known_value(self):
        assert rbf_kernel([0.0, 0.0], [1.0, 2.0], 0.5) == pytest.approx(math.exp(-2.5), abs=1e-15)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            rbf_kernel([0.0], [0.0, 1.0], 1.0)
        with pytest.raises(ValueError):
            rbf_kernel([0.0], [1.0], 0.0)

    def test_gram_matches_pairwise(self):
        x = np.random.default_rng(0).normal(size=(6, 3))
        gram = gram_matrix(x, x, 0.7)
        expected = np.array([[rbf_kernel(a, b, 0.7) for b in x] for a in x])
        np.testing.assert_allclose(gram, expected, atol=1e-12)

    def test_gram_symmetric_psd(self):
        x = np.random.default_rng(1).normal(size=(30, 4))
        gram = gram_matrix(x, x, 0.25)
        np.testing.assert_allclose(gram, gram.T, atol=1e-12)
        np.testing.assert_allclose(np.diag(gram), 1.0)
        assert np.linalg.eigvalsh(gram).min() > -1e-10

    def test_default_gamma(self):
        assert default_gamma(np.ones((4, 5))) == pytest.approx(0.2)
        x = np.random.default_rng(2).normal(size=(50, 4))
        assert default_gamma(x) == pytest.approx(1.0 / (4 * np.var(x)))


class TestSolveBinary:
    """Tests for the two-variable SMO solver."""

    def test_two_points_unbounded(self):
        kernel = np.array([[1.0, 0.5], [0.5, 1.0]])
        y = np.array([1.0, -1.0])
        solution = solve_binary(kernel, y, C=10.0)
        np.testing.assert_allclose(solution.alpha, [2.0, 2.0], atol=1e-12)
        assert solution.bias == pytest.approx(0.0, abs=1e-12)
        decisions = kernel @ (solution.alpha * y) + solution.bias
        np.testing.assert_allclose(decisions, [1.0, -1.0], atol=1e-12)
        assert solution.converged

    def test_two_points_clipped_at_c(self):
        kernel = np.array([[1.0, 0.5], [0.5, 1.0]])
        solution = solve_binary(kernel, np.array([1.0, -1.0]), C=1.0)
        np.testing.assert_allclose(solution.alpha, [1.0, 1.0])
        assert solution.bias == pytest.approx(0.0, abs=1e-12)

    def test_matches_active_set_optimum(self):
        rng = np.random.default_rng(4)
        x = np.concatenate([rng.normal(-0.5, 1.0, 4), rng.normal(0.5, 1.0, 4)])[:, np.newaxis]
        y = np.array([1.0] * 4 + [-1.0] * 4)
        kernel = gram_matrix(x, x, 1.0)
        solution = solve_binary(kernel, y, C=1.0, tol=1e-8)
        assert solution.converged
        assert dual_objective(solution.alpha, y, kernel) == pytest.approx(
            _active_set_optimum(kernel, y, 1.0), abs=1e-7)

    def test_kkt_conditions(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(40, 2))
        y = np.where(x[:, 0] + 0.3 * rng.normal(size=40) > 0, 1.0, -1.0)
        kernel = gram_matrix(x, x, 0.5)
        C = 2.0
        solution = solve_binary(kernel, y, C=C, tol=1e-8)
        alpha = solution.alpha
        assert np.all(alpha >= 0) and np.all(alpha <= C)
        assert abs(alpha @ y) < 1e-9
        margin = y * (kernel @ (alpha * y) + solution.bias)
        assert np.all(margin[alpha < 1e-10] >= 1 - 1e-5)
        assert np.all(margin[alpha > C - 1e-10] <= 1 + 1e-5)
        free = (alpha > 1e-10) & (alpha < C - 1e-10)
        np.testing.assert_allclose(margin[free], 1.0, atol=1e-5)

    def test_iteration_cap(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(30, 2))
        y = np.where(rng.random(30) > 0.5, 1.0, -1.0)
        solution = solve_binary(gram_matrix(x, x, 1.0), y, C=1.0, tol=1e-12, max_iter=3)
        assert solution.iterations == 3
        assert not solution.converged


class TestTrainSvm:
    """Tests for multi-class training and prediction."""

    def test_separable_clusters(self):
        x, labels = _clusters({"a": [0, 0], "b": [6, 0], "c": [0, 6]}, 15, 0.5, seed=0)
        model = train_svm(x, labels)
        assert len(model.machines) == 3
        predicted, votes = predict(model, x)
        assert predicted == labels
        assert votes.shape == (45, 3)
        assert np.all(votes.sum(axis=1) == 3)

    def test_one_dimensional_sign(self):
        x = np.concatenate([np.linspace(-3, -1, 10), np.linspace(1, 3, 10)])[:, np.newaxis]
        labels = ["neg"] * 10 + ["pos"] * 10
        model = train_svm(x, labels, class_names=["neg", "pos"])
        sweep = np.array([[-2.5], [-1.5], [-0.8], [0.8], [1.5], [2.5]])
        assert predict(model, sweep)[0] == ["neg"] * 3 + ["pos"] * 3

    def test_duplicated_rows_with_halved_c(self):
        x, labels = _clusters({"a": [0, 0], "b": [1.5, 0]}, 10, 0.8, seed=1)
        points = np.random.default_rng(2).normal(0.75, 1.0, size=(10, 2))
        single = train_svm(x, labels, C=1.0, tol=1e-8, max_passes=1000)
        doubled = train_svm(np.vstack([x, x]), labels + labels, C=0.5, tol=1e-8, max_passes=1000)
        np.testing.assert_allclose(decision_values(doubled, points), decision_values(single, points), atol=1e-3)

    def test_threaded_training_identical(self):
        x, labels = _clusters({"a": [0, 0], "b": [2, 0], "c": [0, 2], "d": [2, 2]}, 8, 0.7, seed=3)
        serial = train_svm(x, labels)
        threaded = train_svm(x, labels, workers=3)
        np.testing.assert_array_equal(decision_values(serial, x), decision_values(threaded, x))

    def test_absent_class_gets_no_machine(self):
        x, labels = _clusters({"a": [0, 0], "b": [5, 5]}, 5, 0.3, seed=4)
        model = train_svm(x, labels, class_names=["a", "b", "c"])
        assert len(model.machines) == 1
        assert predict(model, x)[1].shape == (10, 3)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="at least two classes"):
            train_svm(np.zeros((3, 2)), ["a", "a", "a"])

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="not in class list"):
            train_svm(np.zeros((2, 1)), ["a", "z"], class_names=["a", "b"])

    def test_width_mismatch(self):
        x, labels = _clusters({"a": [0, 0], "b": [5, 5]}, 5, 0.3, seed=5)
        model = train_svm(x, labels)
        with pytest.raises(ValueError, match="width"):
            predict(model, np.zeros((1, 3)))

    def test_empty_prediction(self):
        x, labels = _clusters({"a": [0, 0], "b": [5, 5]}, 5, 0.3, seed=6)
        predicted, votes = predict(train_svm(x, labels), np.zeros((0, 2)))
        assert predicted == []
        assert votes.shape == (0, 2)


class TestVoting:
    """Tests for one-vs-one vote counting."""

    def test_three_way_tie_goes_to_first_class(self):
        stub = np.zeros((1, 2))

        def machine(pos, neg, bias):
            return BinaryMachine(pos, neg, stub, np.zeros(1), bias)

        model = SvmModel(
            machines=[machine(0, 1, 1.0), machine(0, 2, -1.0), machine(1, 2, 1.0)],
            gamma=1.0,
            C=1.0,
            class_names=("x", "y", "z"),
            normalizer=Normalizer(np.zeros(2), np.ones(2)),
        )
        labels, votes = predict(model, np.zeros((1, 2)))
        assert votes.tolist() == [[1, 1, 1]]
        assert labels == ["x"]


@pytest.mark.slow
class TestRowOrder:
    """Desk-scale checks that training-row order does not matter."""

    def test_accuracy_stable_under_shuffles(self, desk_corpus):
        """Training and held-out accuracy move by under half a point across 5 shuffles."""
        train = desk_corpus.subset(desk_corpus.sessions <= 3)
        test = desk_corpus.subset(desk_corpus.sessions > 3)
        rng = np.random.default_rng(0)

        def accuracies(order):
            x = train.features[order]
            y = [train.labels[i] for i in order]
            model = train_svm(x, y, class_names=train.class_names)
            fit, _ = predict(model, x)
            held, _ = predict(model, test.features)
            return (np.mean([a == b for a, b in zip(fit, y)]),
                    np.mean([a == b for a, b in zip(held, test.labels)]))

        reference = accuracies(np.arange(len(train)))
        for _ in range(5):
            shuffled = accuracies(rng.permutation(len(train)))
            assert abs(shuffled[0] - reference[0]) < 0.005
            assert abs(shuffled[1] - reference[1]) < 0.005
