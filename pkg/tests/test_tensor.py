#!/usr/bin/env python3
"""
Unit tests for the tensor substrate: constructors, the seeded generator,
elementwise operations, reductions and the precision mode.
"""

import unittest
import sys
import os

import numpy as np

# Add the project root to the path so we can import modules
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.styleswap.core.tensor import (
    add,
    frobenius_norm_sq,
    full,
    get_dtype,
    make_rng,
    maximum,
    mean,
    mul,
    ones,
    precision,
    random_uniform,
    scale,
    sub,
    total,
    validate_shape,
    zeros,
)
from src.styleswap.errors import ShapeError


class TestConstructors(unittest.TestCase):

    def test_zeros(self):
        t = zeros([2, 2, 1])
        self.assertEqual(t.shape, (2, 2, 1))
        self.assertTrue(np.all(t == 0.0))

    def test_full(self):
        np.testing.assert_array_equal(full([1, 1, 3], 2.5).reshape(-1), [2.5, 2.5, 2.5])

    def test_ones_sum(self):
        self.assertEqual(total(ones([3, 3, 2])), 18.0)

    def test_zero_extent_rejected(self):
        with self.assertRaises(ShapeError):
            zeros([2, 0, 3])
        with self.assertRaises(ShapeError):
            validate_shape([])

    def test_default_precision_is_float32(self):
        self.assertEqual(zeros([1, 1, 1]).dtype, np.float32)

    def test_precision_context_restores(self):
        before = get_dtype()
        with precision("float64"):
            self.assertEqual(ones([2, 2, 1]).dtype, np.float64)
        self.assertEqual(get_dtype(), before)

    def test_unknown_precision(self):
        with self.assertRaises(ValueError):
            with precision("float16"):
                pass


class TestRandomUniform(unittest.TestCase):

    def test_same_seed_is_bit_identical(self):
        a = random_uniform([4, 5, 3], 0.0, 1.0, make_rng(7))
        b = random_uniform([4, 5, 3], 0.0, 1.0, make_rng(7))
        self.assertEqual(a.tobytes(), b.tobytes())

    def test_different_seeds_differ(self):
        a = random_uniform([4, 5, 3], 0.0, 1.0, make_rng(7))
        b = random_uniform([4, 5, 3], 0.0, 1.0, make_rng(8))
        self.assertFalse(np.array_equal(a, b))

    def test_range(self):
        t = random_uniform([50, 50, 3], 0.0, 1.0, make_rng(1))
        self.assertGreaterEqual(t.min(), 0.0)
        self.assertLess(t.max(), 1.0)

    def test_mean_of_many_samples(self):
        t = random_uniform([100000], 0.0, 1.0, make_rng(3))
        self.assertAlmostEqual(mean(t), 0.5, delta=0.01)

    def test_lo_must_be_below_hi(self):
        with self.assertRaises(ValueError):
            random_uniform([2, 2, 1], 1.0, 1.0, make_rng(0))


class TestElementwiseAndReductions(unittest.TestCase):

    def setUp(self):
        self.x = random_uniform([3, 4, 2], -1.0, 1.0, make_rng(11))
        self.y = random_uniform([3, 4, 2], -1.0, 1.0, make_rng(12))

    def test_add_zeros_is_identity(self):
        np.testing.assert_array_equal(add(zeros(self.x.shape), self.x), self.x)

    def test_elementwise_semantics(self):
        np.testing.assert_array_equal(sub(self.x, self.y), self.x - self.y)
        np.testing.assert_array_equal(mul(self.x, self.y), self.x * self.y)
        np.testing.assert_array_equal(scale(self.x, 2.0), self.x * 2)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            add(self.x, zeros([4, 3, 2]))
        with self.assertRaises(ShapeError):
            mul(self.x, zeros([3, 4, 1]))

    def test_frobenius_hand_value(self):
        self.assertEqual(frobenius_norm_sq(np.array([[3.0, 4.0]], dtype=np.float32)), 25.0)

    def test_reductions_match_scalar_loop(self):
        flat = [float(v) for v in self.x.reshape(-1)]
        loop_sum = 0.0
        loop_sq = 0.0
        loop_max = flat[0]
        for v in flat:
            loop_sum += v
            loop_sq += v * v
            loop_max = max(loop_max, v)
        self.assertAlmostEqual(total(self.x), loop_sum, delta=1e-6 * max(1.0, abs(loop_sum)))
        self.assertAlmostEqual(mean(self.x), loop_sum / len(flat), delta=1e-6)
        self.assertAlmostEqual(frobenius_norm_sq(self.x), loop_sq, delta=1e-6 * loop_sq)
        self.assertEqual(maximum(self.x), loop_max)

    def test_row_major_round_trip(self):
        for shape in ([1, 1, 1], [2, 3, 4], [5, 1, 7], [2, 2, 2, 3]):
            t = random_uniform(shape, 0.0, 1.0, make_rng(5))
            np.testing.assert_array_equal(t.reshape(-1).reshape(shape), t)
        t = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
        # (h, then w, then d) order
        self.assertEqual(t[1, 0, 1], 7.0)


if __name__ == '__main__':
    unittest.main()
