#!/usr/bin/env python3
"""
Tests for the built-in encoders and the image gradient through them.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.styleswap.core.encoder import (
    IMAGENET_MEAN,
    EncoderSpec,
    build_identity,
    build_tiny,
    build_truncated_vgg19,
    encode,
    encode_backward,
    encoder_from_name,
    resolve_encoder,
)
from src.styleswap.core.gradcheck import kink_margin, numerical_gradient, relative_error
from src.styleswap.core.inverse_net import build_vgg_inverse
from src.styleswap.core.layers import LayerKind
from src.styleswap.core.tensor import make_rng, precision
from src.styleswap.errors import ShapeError


class TestBuiltInEncoders(unittest.TestCase):

    def test_identity_passes_image_through(self):
        image = make_rng(0).uniform(size=(5, 4, 3))
        acts, _ = encode(image, build_identity())
        np.testing.assert_array_equal(acts, image)

    def test_vgg_relu3_1_geometry(self):
        encoder = build_truncated_vgg19(seed=0)
        self.assertEqual(encoder.out_channels, 256)
        self.assertEqual(encoder.downsample_factor, 4)
        self.assertEqual(encoder.output_shape(16, 20), (4, 5, 256))
        kinds = [layer.spec.kind for layer in encoder.layers]
        self.assertEqual(kinds.count(LayerKind.CONV), 5)
        self.assertEqual(kinds.count(LayerKind.MAXPOOL), 2)

    def test_vgg_and_inverse_shape_contract(self):
        encoder = build_truncated_vgg19(seed=0)
        net = build_vgg_inverse(encoder.name)
        self.assertEqual(encoder.output_shape(256, 256), (64, 64, 256))
        self.assertEqual(net.output_shape(64, 64), (256, 256, 3))
        # Odd extents are truncated by each 2x2 pooling.
        self.assertEqual(encoder.output_shape(37, 50), (9, 12, 256))
        self.assertEqual(net.output_shape(9, 12), (36, 48, 3))

    def test_vgg_activations_are_nonnegative(self):
        encoder = build_truncated_vgg19(seed=1)
        acts, _ = encode(make_rng(1).uniform(size=(8, 8, 3)).astype(np.float32), encoder)
        self.assertEqual(acts.shape, (2, 2, 256))
        self.assertGreaterEqual(float(acts.min()), 0.0)

    def test_tiny_geometry(self):
        encoder = build_tiny(channels=4, seed=2)
        self.assertEqual(encoder.out_channels, 4)
        self.assertEqual(encoder.output_shape(9, 6), (4, 3, 4))

    def test_image_smaller_than_one_output_pixel(self):
        with self.assertRaises(ShapeError):
            encode(np.zeros((3, 3, 3), dtype=np.float32), build_truncated_vgg19())

    def test_rejects_non_rgb(self):
        with self.assertRaises(ShapeError):
            encode(np.zeros((4, 4, 1), dtype=np.float32), build_identity())

    def test_same_seed_same_weights(self):
        a, b = build_tiny(3, seed=9), build_tiny(3, seed=9)
        np.testing.assert_array_equal(a.layers[0].params.weights, b.layers[0].params.weights)


class TestEncoderNames(unittest.TestCase):

    def test_resolve_tokens(self):
        self.assertEqual(resolve_encoder("identity").name, "identity")
        self.assertEqual(resolve_encoder("tiny:5", seed=3).name, "tiny5-seed3")
        self.assertEqual(resolve_encoder("vgg19", seed=2).name, "vgg19-relu3_1-seed2")

    def test_unknown_token(self):
        with self.assertRaises(ValueError):
            resolve_encoder("resnet")

    def test_name_round_trip(self):
        for encoder in (build_identity(), build_tiny(6, seed=4)):
            rebuilt = encoder_from_name(encoder.name)
            self.assertEqual(rebuilt.name, encoder.name)
            for original, copy in zip(encoder.layers, rebuilt.layers):
                if original.params is not None:
                    np.testing.assert_array_equal(original.params.weights, copy.params.weights)

    def test_unknown_name(self):
        self.assertIsNone(encoder_from_name("my-custom-net"))


class TestEncoderGradient(unittest.TestCase):

    def test_matches_finite_differences(self):
        with precision("float64"):
            checked = 0
            for seed in range(50):
                rng = make_rng(seed)
                encoder = build_tiny(channels=3, seed=seed)
                image = rng.uniform(size=(6, 6, 3))
                acts, trace = encode(image, encoder)
                if kink_margin(encoder.layers, trace.inputs) < 1e-3:
                    continue
                probe = rng.standard_normal(acts.shape)
                analytic = encode_backward(trace, encoder, probe)
                numeric = numerical_gradient(lambda: float(np.sum(encode(image, encoder)[0] * probe)), image)
                self.assertLess(relative_error(analytic, numeric), 1e-4)
                checked += 1
                if checked == 3:
                    break
            self.assertEqual(checked, 3)

    def test_preprocessing_scale_enters_gradient(self):
        with precision("float64"):
            encoder = EncoderSpec("scaled", [], IMAGENET_MEAN, (2.0, 3.0, 4.0))
            image = make_rng(0).uniform(size=(2, 2, 3))
            _, trace = encode(image, encoder)
            grad = encode_backward(trace, encoder, np.ones((2, 2, 3)))
            np.testing.assert_allclose(grad[0, 0], encoder.scale)

    def test_trace_from_other_encoder(self):
        _, trace = encode(np.zeros((4, 4, 3), dtype=np.float32), build_tiny(2))
        with self.assertRaises(ShapeError):
            encode_backward(trace, build_identity(), np.zeros((2, 2, 2), dtype=np.float32))


if __name__ == '__main__':
    unittest.main()
