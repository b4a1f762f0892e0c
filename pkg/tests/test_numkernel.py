#!/usr/bin/env python3
"""
Numeric kernel tests
Activations, matrix-vector products, quantiles, correlation and seeded draws
"""

import math
import os
import unittest

import numpy as np

os.environ['FORECAST_ENV'] = 'test'

from engines.numkernel import (DegenerateInputError, NumericError, ShapeError, activate,
                               child_rng, make_rng, mat_vec, pearson, quantile, uniform)


class TestActivations(unittest.TestCase):
    """Sigmoid, tanh and relu behaviour"""

    def test_known_values(self):
        """Closed-form activation values"""
        self.assertEqual(activate("sigmoid", 0.0), 0.5)
        self.assertEqual(activate("tanh", 0.0), 0.0)
        self.assertEqual(activate("relu", -3.5), 0.0)
        self.assertAlmostEqual(activate("sigmoid", math.log(3.0)), 0.75, places=12)
        self.assertAlmostEqual(activate("sigmoid", math.log(3.0)), 3.0 / (3.0 + 1.0), places=12)

    def test_sigmoid_symmetry(self):
        """sigmoid(-x) = 1 - sigmoid(x) over [-30, 30]"""
        xs = np.linspace(-30.0, 30.0, 601)
        np.testing.assert_allclose(activate("sigmoid", -xs), 1.0 - activate("sigmoid", xs), atol=1e-12, rtol=0)

    def test_ranges_and_monotonicity(self):
        """Outputs stay in range and never decrease"""
        xs = np.linspace(-8.0, 8.0, 401)
        sig = activate("sigmoid", xs)
        tanh = activate("tanh", xs)
        relu = activate("relu", xs)
        self.assertTrue(np.all((sig > 0) & (sig < 1)))
        self.assertTrue(np.all((tanh > -1) & (tanh < 1)))
        np.testing.assert_array_equal(relu, np.maximum(xs, 0.0))
        for out in (sig, tanh, relu):
            self.assertTrue(np.all(np.diff(out) >= 0))

    def test_non_finite_input_rejected(self):
        """NaN and inf inputs raise"""
        for bad in (float("nan"), float("inf"), -float("inf")):
            with self.assertRaises(NumericError) as ctx:
                activate("sigmoid", bad)
            self.assertIn("non-finite activation input", str(ctx.exception))

    def test_unknown_kind(self):
        """Unknown activation kind raises"""
        with self.assertRaises(NumericError):
            activate("softplus", 1.0)


class TestMatVec(unittest.TestCase):
    """Matrix-vector products"""

    def test_examples(self):
        """Identity, zero and hand-evaluated products"""
        np.testing.assert_array_equal(mat_vec(np.eye(2), np.array([3.0, 4.0])), [3.0, 4.0])
        np.testing.assert_array_equal(mat_vec(np.zeros((3, 2)), np.array([5.0, -1.0])), [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(mat_vec(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 1.0])), [3.0, 7.0])

    def test_shape_mismatch_names_both_shapes(self):
        """Error message carries both shapes"""
        with self.assertRaises(ShapeError) as ctx:
            mat_vec(np.zeros((2, 3)), np.zeros(2))
        self.assertIn("(2, 3)", str(ctx.exception))
        self.assertIn("(2,)", str(ctx.exception))

    def test_linearity(self):
        """M(au + bv) = aMu + bMv on random instances"""
        rng = np.random.default_rng(7)
        for _ in range(50):
            m = rng.normal(size=(4, 5))
            u, v = rng.normal(size=5), rng.normal(size=5)
            a, b = rng.normal(size=2)
            np.testing.assert_allclose(mat_vec(m, a * u + b * v), a * mat_vec(m, u) + b * mat_vec(m, v),
                                       atol=1e-9, rtol=0)


class TestQuantile(unittest.TestCase):
    """Linear-interpolation quantiles"""

    def test_examples(self):
        """Median, quartiles and singleton"""
        values = [1, 2, 3, 4, 5]
        self.assertEqual(quantile(values, 0.5), 3.0)
        self.assertEqual(quantile(values, 0.25), 2.0)
        self.assertEqual(quantile(values, 0.75), 4.0)
        for q in (0.0, 0.3, 1.0):
            self.assertEqual(quantile([7], q), 7.0)

    def test_interpolates_between_ranks(self):
        """Position q*(n-1) between sorted values"""
        self.assertAlmostEqual(quantile([10, 0, 20, 30], 0.5), 15.0)

    def test_errors(self):
        """Empty input, out-of-range q and non-finite values"""
        with self.assertRaises(NumericError):
            quantile([], 0.5)
        with self.assertRaises(NumericError):
            quantile([1, 2], 1.5)
        with self.assertRaises(NumericError):
            quantile([1, 2], -0.1)
        with self.assertRaises(NumericError):
            quantile([1, float("nan")], 0.5)

    def test_order_and_permutation(self):
        """Non-decreasing in q and invariant under permutation"""
        rng = np.random.default_rng(3)
        values = rng.normal(size=31)
        qs = np.linspace(0, 1, 21)
        results = [quantile(values, q) for q in qs]
        self.assertTrue(all(b >= a for a, b in zip(results, results[1:])))
        shuffled = rng.permutation(values)
        for q in qs:
            self.assertEqual(quantile(values, q), quantile(shuffled, q))
        self.assertTrue(values.min() <= quantile(values, 0.37) <= values.max())


class TestPearson(unittest.TestCase):
    """Pearson correlation"""

    def test_examples(self):
        """Self, anti-linear and linear relations"""
        x = np.array([1.0, 4.0, 2.0, 8.0])
        self.assertAlmostEqual(pearson(x, x), 1.0, places=12)
        self.assertAlmostEqual(pearson([1, 2, 3], [-1, -2, -3]), -1.0, places=12)
        self.assertAlmostEqual(pearson([1, 2, 3], [2, 4, 6]), 1.0, places=12)

    def test_degenerate_input(self):
        """Zero variance raises the degenerate error"""
        with self.assertRaises(DegenerateInputError) as ctx:
            pearson([1, 1, 1], [1, 2, 3])
        self.assertIn("degenerate correlation input", str(ctx.exception))

    def test_affine_invariance_and_sign_flip(self):
        """Positive affine rescaling keeps r, negation flips it"""
        rng = np.random.default_rng(11)
        for _ in range(20):
            x, y = rng.normal(size=12), rng.normal(size=12)
            r = pearson(x, y)
            self.assertTrue(-1.0 <= r <= 1.0)
            self.assertAlmostEqual(pearson(3.5 * x + 2.0, y), r, delta=1e-9)
            self.assertAlmostEqual(pearson(x, 0.2 * y - 7.0), r, delta=1e-9)
            self.assertAlmostEqual(pearson(-x, y), -r, delta=1e-12)

    def test_length_mismatch(self):
        """Unequal lengths raise"""
        with self.assertRaises(ShapeError):
            pearson([1, 2, 3], [1, 2])


class TestSeededRandomness(unittest.TestCase):
    """Seeded generators and uniform draws"""

    def test_zero_width_interval(self):
        """lo == hi returns lo"""
        self.assertEqual(uniform(make_rng(1), 0.0, 0.0), 0.0)

    def test_reversed_bounds(self):
        """lo > hi raises"""
        with self.assertRaises(NumericError):
            uniform(make_rng(1), 1.0, 0.0)

    def test_reproducible_draws(self):
        """Same seed gives bit-identical streams"""
        a = uniform(make_rng(42), 0.0, 1.0, size=1000)
        b = uniform(make_rng(42), 0.0, 1.0, size=1000)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(uniform(child_rng(42, "layer0"), -1, 1, size=10),
                                      uniform(child_rng(42, "layer0"), -1, 1, size=10))

    def test_child_streams_differ(self):
        """Different labels give different streams"""
        a = uniform(child_rng(42, "layer0"), 0.0, 1.0, size=10)
        b = uniform(child_rng(42, "layer1"), 0.0, 1.0, size=10)
        self.assertFalse(np.array_equal(a, b))

    def test_sample_mean(self):
        """10^5 draws on [0, 1) average near 0.5"""
        draws = uniform(make_rng(5), 0.0, 1.0, size=100000)
        self.assertTrue(np.all((draws >= 0.0) & (draws < 1.0)))
        self.assertAlmostEqual(float(draws.mean()), 0.5, delta=0.01)


if __name__ == '__main__':
    unittest.main()
