#!/usr/bin/env python3
"""
Tests for optimization-based stylization: the TV term, the objective's
gradient, Adam, convergence and the random-initialization consistency runs.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.styleswap.core.encoder import build_identity, build_tiny, encode
from src.styleswap.core.gradcheck import kink_margin, numerical_gradient, relative_error
from src.styleswap.core.optim import (
    Adam,
    OptimConfig,
    consistency_experiment,
    descend,
    optimize,
    stylize_loss,
    swap_target,
    tv_grad,
    tv_loss,
)
from src.styleswap.core.style_swap import SwapConfig
from src.styleswap.core.synthetic import natural_image, painting_image
from src.styleswap.core.tensor import make_rng, precision
from src.styleswap.errors import ConfigError, DivergenceError, ShapeError


class TestTotalVariation(unittest.TestCase):

    def test_two_by_two(self):
        image = np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(2, 2, 1)
        self.assertEqual(tv_loss(image), 10.0)

    def test_single_row(self):
        self.assertEqual(tv_loss(np.array([[0.0, 1.0, 3.0]]).reshape(1, 3, 1)), 5.0)

    def test_constant_image(self):
        self.assertEqual(tv_loss(np.full((4, 5, 3), 0.7)), 0.0)

    def test_gradient(self):
        image = make_rng(0).standard_normal((4, 5, 3))
        numeric = numerical_gradient(lambda: tv_loss(image), image)
        self.assertLess(relative_error(tv_grad(image), numeric), 1e-6)


class TestStylizeObjective(unittest.TestCase):

    def test_gradient_through_tiny_encoder(self):
        with precision("float64"):
            checked = 0
            for seed in range(50):
                rng = make_rng(seed)
                encoder = build_tiny(channels=3, seed=seed)
                image = rng.uniform(size=(6, 6, 3))
                acts, trace = encode(image, encoder)
                if kink_margin(encoder.layers, trace.inputs) < 1e-3:
                    continue
                target = rng.uniform(size=acts.shape)
                _, analytic = stylize_loss(image, target, encoder, 0.1)
                numeric = numerical_gradient(lambda: stylize_loss(image, target, encoder, 0.1)[0], image)
                self.assertLess(relative_error(analytic, numeric), 1e-4)
                checked += 1
                if checked == 3:
                    break
            self.assertEqual(checked, 3)

    def test_target_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            stylize_loss(np.zeros((4, 4, 3)), np.zeros((3, 3, 3)), build_identity(), 0.0)


class TestAdam(unittest.TestCase):

    def test_first_step_moves_by_learning_rate(self):
        param = np.array([1.0])
        Adam([param], lr=0.1).step([param], [np.array([2.0])])
        self.assertAlmostEqual(float(param[0]), 0.9, places=6)

    def test_state_round_trip(self):
        rng = make_rng(1)
        a, b = np.ones(4), np.ones(4)
        first = Adam([a], lr=0.01)
        for _ in range(3):
            first.step([a], [rng.standard_normal(4)])
        b[:] = a
        second = Adam([b], lr=0.01)
        second.load_state_arrays(first.state_arrays())
        grad = rng.standard_normal(4)
        first.step([a], [grad])
        second.step([b], [grad])
        np.testing.assert_array_equal(a, b)


class TestDescent(unittest.TestCase):

    def setUp(self):
        rng = make_rng(21)
        self.content = rng.uniform(size=(16, 16, 3))
        self.style = rng.uniform(size=(16, 16, 3))

    def test_converges_in_rgb_space(self):
        with precision("float64"):
            config = OptimConfig(lambda_tv=0.0, max_iters=500, init="random", seed=4, log_every=100)
            report = optimize(self.content, self.style, build_identity(), SwapConfig(), config)
        self.assertEqual(len(report.records), 501)
        self.assertLess(report.losses[-1], 1e-6 * report.losses[0])

    def test_first_record_is_initial_loss(self):
        with precision("float64"):
            encoder = build_identity()
            target = swap_target(self.content, self.style, encoder, SwapConfig())
            config = OptimConfig(lambda_tv=1e-3, max_iters=3)
            report = descend(target, self.content, encoder, config)
            expected, _ = stylize_loss(self.content, target, encoder, 1e-3)
        self.assertAlmostEqual(report.records[0].total, expected, places=10)
        header, rows = report.csv_rows()
        self.assertEqual(header, ["iter", "total", "act_term", "tv_term"])
        self.assertEqual([row[0] for row in rows], [0, 1, 2, 3])

    def test_tolerance_stops_early(self):
        config = OptimConfig(lambda_tv=0.0, max_iters=50, tolerance=1.0)
        report = optimize(self.content, self.style, build_identity(), SwapConfig(), config)
        self.assertEqual(len(report.records), 2)

    def test_nan_target_diverges(self):
        target = np.full((16, 16, 3), np.nan)
        with self.assertRaises(DivergenceError):
            descend(target, self.content, build_identity(), OptimConfig(max_iters=2))

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            OptimConfig(init="noise").validate()
        with self.assertRaises(ConfigError):
            OptimConfig(max_iters=0).validate()


class TestConsistency(unittest.TestCase):

    def setUp(self):
        rng = make_rng(22)
        self.content = rng.uniform(size=(8, 8, 3))
        self.style = rng.uniform(size=(8, 8, 3))

    def test_identical_seeds_have_zero_spread(self):
        config = OptimConfig(lambda_tv=1e-6, max_iters=10)
        report = consistency_experiment(self.content, self.style, build_identity(), SwapConfig(),
                                        config, k_runs=2, seeds=[3, 3], workers=2)
        self.assertEqual(len(report.stddev), 11)
        self.assertTrue(all(value == 0.0 for value in report.stddev))

    def test_spread_shrinks_with_a_unique_minimizer(self):
        with precision("float64"):
            config = OptimConfig(lambda_tv=0.0, max_iters=200, log_every=100)
            report = consistency_experiment(self.content, self.style, build_identity(), SwapConfig(),
                                            config, k_runs=3, workers=1)
        self.assertEqual(len(report.runs), 3)
        self.assertGreater(report.stddev[0], 0.0)
        self.assertLess(report.stddev[-1], 0.1 * report.stddev[0])
        header, rows = report.csv_rows()
        self.assertEqual(header[-1], "stddev")
        self.assertEqual(len(rows), 201)

    def test_spread_shrinks_through_tiny_encoder(self):
        rng = make_rng(0)
        content = natural_image(32, rng)
        style = painting_image(32, rng)
        config = OptimConfig(max_iters=100, init="random", seed=0, log_every=100)
        report = consistency_experiment(content, style, build_tiny(channels=8, seed=0), SwapConfig(),
                                        config, k_runs=5)
        self.assertEqual(len(report.runs), 5)
        self.assertLess(report.stddev[-1], report.stddev[0])

    def test_needs_two_runs(self):
        with self.assertRaises(ConfigError):
            consistency_experiment(self.content, self.style, build_identity(), k_runs=1)

    def test_seed_count_must_match(self):
        with self.assertRaises(ConfigError):
            consistency_experiment(self.content, self.style, build_identity(), k_runs=3, seeds=[1, 2])


if __name__ == '__main__':
    unittest.main()
