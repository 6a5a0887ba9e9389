#!/usr/bin/env python3
"""
Tests for the stylization pipeline graph: routing and agreement with the
library calls each decoder mode wraps.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.styleswap.core.encoder import build_identity, build_tiny
from src.styleswap.core.inverse_net import build_identity_inverse, build_small_inverse, feedforward_stylize
from src.styleswap.core.optim import OptimConfig, optimize
from src.styleswap.core.style_swap import SwapConfig, style_swap
from src.styleswap.core.tensor import make_rng
from src.styleswap.errors import ConfigError, PairingError
from src.styleswap.graph import create_pipeline, run_pipeline


class TestPipeline(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.pipeline = create_pipeline()

    def setUp(self):
        rng = make_rng(30)
        self.content = rng.uniform(size=(8, 8, 3)).astype(np.float32)
        self.style = rng.uniform(size=(8, 8, 3)).astype(np.float32)

    def test_swap_mode_in_rgb(self):
        state = run_pipeline("swap", self.content, self.style, build_identity(), pipeline=self.pipeline)
        self.assertEqual(state["events"], ["router", "encode", "swap", "emit"])
        np.testing.assert_array_equal(state["image"], style_swap(self.content, self.style, SwapConfig()))

    def test_swap_mode_with_a_deep_encoder_has_no_image(self):
        state = run_pipeline("swap", self.content, self.style, build_tiny(4), pipeline=self.pipeline)
        self.assertIsNone(state["image"])
        self.assertEqual(state["swap_result"].activations.shape, (4, 4, 4))

    def test_optim_mode_matches_optimize(self):
        config = OptimConfig(max_iters=5)
        state = run_pipeline("optim", self.content, self.style, build_identity(), SwapConfig(), config,
                             pipeline=self.pipeline)
        self.assertEqual(state["events"][-1], "optimize")
        expected = optimize(self.content, self.style, build_identity(), SwapConfig(), config)
        np.testing.assert_array_equal(state["image"], expected.image)
        self.assertEqual(state["report"].losses, expected.losses)

    def test_feedforward_mode_matches_library(self):
        encoder = build_tiny(2, seed=1)
        net = build_small_inverse(encoder, width=4, seed=1)
        state = run_pipeline("feedforward", self.content, self.style, encoder, net=net, pipeline=self.pipeline)
        self.assertEqual(state["events"], ["router", "encode", "swap", "invert"])
        np.testing.assert_array_equal(state["image"], feedforward_stylize(self.content, self.style, encoder, net))

    def test_feedforward_needs_paired_net(self):
        with self.assertRaises(ConfigError):
            run_pipeline("feedforward", self.content, self.style, build_identity(), pipeline=self.pipeline)
        with self.assertRaises(PairingError):
            run_pipeline("feedforward", self.content, self.style, build_tiny(2),
                         net=build_identity_inverse(), pipeline=self.pipeline)

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError):
            run_pipeline("paint", self.content, self.style, build_identity(), pipeline=self.pipeline)

    def test_invalid_swap_config(self):
        with self.assertRaises(ConfigError):
            run_pipeline("swap", self.content, self.style, build_identity(), SwapConfig(stride=0),
                         pipeline=self.pipeline)


if __name__ == '__main__':
    unittest.main()
