import os
import sys
import unittest

import numpy as np
from scipy.stats import multivariate_normal

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from two_truths.core import gmm  # noqa: E402
from two_truths.errors import DimensionMismatchError, GmmFitError  # noqa: E402


def _two_blobs(rng, n_per=150, offset=6.0, d=2):
    first = rng.standard_normal((n_per, d))
    second = rng.standard_normal((n_per, d)) + offset
    return np.vstack([first, second]), np.repeat([0, 1], n_per)


class DensityTests(unittest.TestCase):
    def test_single_component_log_likelihood_matches_scipy(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 2))
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        model = gmm.GmmModel(weights=np.array([1.0]), means=np.array([[0.5, -0.2]]), covariances=cov[None])
        expected = multivariate_normal(mean=[0.5, -0.2], cov=cov).logpdf(X).sum()
        self.assertAlmostEqual(gmm.log_likelihood(model, X), expected, places=8)

    def test_parameter_count_and_bic(self):
        self.assertEqual(gmm.n_parameters(2, 2), 11)
        self.assertEqual(gmm.n_parameters(1, 1), 2)
        rng = np.random.default_rng(1)
        X, _ = _two_blobs(rng)
        model = gmm.fit(X, 2, seed=0)
        expected = 2 * gmm.log_likelihood(model, X) - 11 * np.log(len(X))
        self.assertAlmostEqual(gmm.bic(model, X), expected, places=8)

    def test_hard_assign_ties_go_to_first_component(self):
        cov = np.eye(2)[None].repeat(2, axis=0)
        model = gmm.GmmModel(weights=np.array([0.5, 0.5]), means=np.zeros((2, 2)), covariances=cov)
        labels = gmm.hard_assign(model, np.random.default_rng(2).standard_normal((10, 2)))
        self.assertTrue(np.all(labels == 0))

    def test_responsibilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        X, _ = _two_blobs(rng)
        model = gmm.fit(X, 2, seed=1)
        np.testing.assert_allclose(gmm.responsibilities(model, X).sum(axis=1), 1.0)

    def test_component_order_does_not_change_likelihood(self):
        rng = np.random.default_rng(6)
        X, _ = _two_blobs(rng, offset=3.0)
        model = gmm.GmmModel(
            weights=np.array([0.2, 0.5, 0.3]),
            means=np.array([[0.0, 0.0], [3.0, 3.0], [1.0, -1.0]]),
            covariances=np.array([np.eye(2), [[2.0, 0.4], [0.4, 1.0]], 0.5 * np.eye(2)]),
        )
        order = [2, 0, 1]
        shuffled = gmm.GmmModel(weights=model.weights[order], means=model.means[order],
                                covariances=model.covariances[order])
        self.assertAlmostEqual(gmm.log_likelihood(shuffled, X), gmm.log_likelihood(model, X), places=9)
        self.assertAlmostEqual(gmm.bic(shuffled, X), gmm.bic(model, X), places=9)

    def test_duplicated_data_doubles_likelihood(self):
        rng = np.random.default_rng(8)
        X, _ = _two_blobs(rng)
        model = gmm.fit(X, 2, seed=2)
        self.assertAlmostEqual(gmm.log_likelihood(model, np.vstack([X, X])),
                               2 * gmm.log_likelihood(model, X), places=8)

    def test_dimension_mismatch(self):
        model = gmm.GmmModel(weights=np.array([1.0]), means=np.zeros((1, 2)), covariances=np.eye(2)[None])
        with self.assertRaises(DimensionMismatchError):
            gmm.log_likelihood(model, np.zeros((4, 3)))


class FitTests(unittest.TestCase):
    def test_recovers_separated_components(self):
        rng = np.random.default_rng(4)
        X, truth = _two_blobs(rng)
        model = gmm.fit(X, 2, seed=0)
        self.assertTrue(model.converged)
        means = model.means[np.argsort(model.means[:, 0])]
        np.testing.assert_allclose(means, [[0.0, 0.0], [6.0, 6.0]], atol=0.3)
        np.testing.assert_allclose(np.sort(model.weights), [0.5, 0.5], atol=0.02)
        labels = gmm.hard_assign(model, X)
        agreement = max(np.mean(labels == truth), np.mean(labels != truth))
        self.assertEqual(agreement, 1.0)

    def test_same_seed_same_model(self):
        rng = np.random.default_rng(5)
        X, _ = _two_blobs(rng)
        first = gmm.fit(X, 3, seed=9)
        second = gmm.fit(X, 3, seed=9)
        np.testing.assert_array_equal(first.means, second.means)
        self.assertEqual(first.log_likelihood, second.log_likelihood)

    def test_parallel_restarts_match_serial(self):
        rng = np.random.default_rng(6)
        X, _ = _two_blobs(rng, n_per=60)
        serial = gmm.fit(X, 2, seed=3, opts=gmm.GmmOptions(n_init=3))
        parallel = gmm.fit(X, 2, seed=3, opts=gmm.GmmOptions(n_init=3, n_jobs=2))
        np.testing.assert_allclose(parallel.means, serial.means)
        self.assertAlmostEqual(parallel.log_likelihood, serial.log_likelihood)

    def test_em_log_likelihood_is_monotone(self):
        opts = gmm.GmmOptions(n_init=1)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            K = 2 + seed % 2
            centers = rng.uniform(-4, 4, size=(K, 2))
            X = np.vstack([c + rng.standard_normal((80, 2)) * rng.uniform(0.5, 1.5) for c in centers])
            with self.subTest(seed=seed):
                model = gmm.fit(X, K, seed=seed, opts=opts)
                history = np.asarray(model.ll_history)
                self.assertGreater(len(history), 1)
                steps = np.diff(history)
                self.assertTrue(np.all(steps >= -1e-9 * np.abs(history[:-1])), steps.min())

    def test_single_component_is_sample_moments(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((200, 3)) @ np.diag([1.0, 2.0, 0.5])
        model = gmm.fit(X, 1, seed=0)
        np.testing.assert_allclose(model.means[0], X.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(model.covariances[0], np.cov(X, rowvar=False, bias=True), atol=1e-10)

    def test_invalid_inputs(self):
        with self.assertRaises(GmmFitError):
            gmm.fit(np.zeros((3, 2)), 4)
        with self.assertRaises(GmmFitError):
            gmm.fit(np.zeros((1, 2)), 1)
        X = np.ones((5, 2))
        X[0, 0] = np.nan
        with self.assertRaises(GmmFitError):
            gmm.fit(X, 1)

    def test_one_dimensional_input(self):
        rng = np.random.default_rng(8)
        x = np.concatenate([rng.normal(0, 1, 100), rng.normal(10, 1, 100)])
        model = gmm.fit(x, 2, seed=0)
        self.assertEqual(model.d, 1)
        np.testing.assert_allclose(np.sort(model.means[:, 0]), [0.0, 10.0], atol=0.4)

    def test_json_round_trip(self):
        rng = np.random.default_rng(9)
        X, _ = _two_blobs(rng)
        model = gmm.fit(X, 2, seed=0)
        again = gmm.GmmModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(again.means, model.means)
        np.testing.assert_array_equal(again.covariances, model.covariances)
        self.assertEqual(again.converged, model.converged)
        self.assertAlmostEqual(gmm.log_likelihood(again, X), gmm.log_likelihood(model, X))


if __name__ == '__main__':
    unittest.main()
