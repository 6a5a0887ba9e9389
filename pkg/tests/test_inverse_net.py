#!/usr/bin/env python3
"""
Tests for the inverse network: pairing, the parameter gradient of the
inversion loss, image pools and minibatches, and training with checkpoints.
"""

import unittest
import sys
import os
import tempfile

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.styleswap.core.encoder import build_identity, build_tiny, build_truncated_vgg19, encode
from src.styleswap.core.gradcheck import kink_margin, numerical_gradient, relative_error
from src.styleswap.core.inverse_net import (
    ImagePool,
    InverseNetSpec,
    TrainConfig,
    build_identity_inverse,
    build_inverse_for,
    build_small_inverse,
    build_vgg_inverse,
    check_pairing,
    feedforward_stylize,
    inversion_loss,
    invert,
    make_minibatch,
    parameters,
    split_holdout,
    train,
)
from src.styleswap.core.io_formats import load_weights
from src.styleswap.core.layers import forward_stack
from src.styleswap.core.style_swap import SwapConfig, style_swap
from src.styleswap.core.synthetic import synthetic_pools
from src.styleswap.core.tensor import make_rng, precision
from src.styleswap.errors import (
    ConfigError,
    DivergenceError,
    EmptyPoolError,
    PairingError,
    PoolExhaustedError,
    ShapeError,
)


class TestArchitecture(unittest.TestCase):

    def test_vgg_inverse_undoes_two_poolings(self):
        net = build_vgg_inverse("vgg19-relu3_1-seed0")
        self.assertEqual(net.in_channels, 256)
        self.assertEqual(net.upsample_factor, 4)
        self.assertEqual(net.output_shape(4, 5), (16, 20, 3))
        check_pairing(net, build_truncated_vgg19(seed=0))

    def test_vgg_seed_is_part_of_the_pairing(self):
        with self.assertRaises(PairingError):
            check_pairing(build_vgg_inverse("vgg19-relu3_1-seed0"), build_truncated_vgg19(seed=1))

    def test_small_inverse_mirrors_encoder(self):
        encoder = build_tiny(channels=5, seed=1)
        net = build_small_inverse(encoder, width=6)
        self.assertEqual(net.in_channels, 5)
        self.assertEqual(net.upsample_factor, 2)
        acts, _ = encode(np.zeros((8, 6, 3), dtype=np.float32), encoder)
        self.assertEqual(invert(acts, net).shape, (8, 6, 3))

    def test_build_inverse_for(self):
        self.assertEqual(build_inverse_for(build_identity()).in_channels, 3)
        self.assertEqual(build_inverse_for(build_tiny(4)).encoder_name, "tiny4-seed0")

    def test_pairing_mismatch(self):
        with self.assertRaises(PairingError):
            check_pairing(build_identity_inverse(), build_tiny(2))

    def test_wrong_activation_depth(self):
        with self.assertRaises(ShapeError):
            invert(np.zeros((2, 2, 4), dtype=np.float32), build_identity_inverse())

    def test_must_end_in_rgb(self):
        net = build_small_inverse(build_tiny(2))
        with self.assertRaises(ShapeError):
            InverseNetSpec("broken", net.encoder_name, net.layers[:-1])


class TestInversionLoss(unittest.TestCase):

    def assertGradientClose(self, analytic, numeric):
        # A bias feeding an instance norm has an exactly zero gradient.
        if np.linalg.norm(numeric) < 1e-7:
            self.assertLess(np.linalg.norm(analytic), 1e-7)
        else:
            self.assertLess(relative_error(analytic, numeric), 1e-4)

    def test_identity_pair_is_lossless(self):
        batch = [make_rng(0).uniform(size=(4, 4, 3)).astype(np.float32)]
        loss, grads = inversion_loss(batch, build_identity_inverse(), build_identity(), lambda_tv=0.0)
        self.assertEqual(loss, 0.0)
        self.assertTrue(np.all(grads[0].weights == 0))

    def test_parameter_gradient(self):
        with precision("float64"):
            checked = 0
            for seed in range(100):
                rng = make_rng(seed)
                encoder = build_tiny(channels=2, seed=seed)
                net = build_small_inverse(encoder, width=4, seed=seed + 1)
                batch = [encode(rng.uniform(size=(4, 4, 3)), encoder)[0] for _ in range(2)]
                margin = np.inf
                for acts in batch:
                    image, net_inputs = forward_stack(net.layers, acts)
                    _, trace = encode(image, encoder)
                    margin = min(margin, kink_margin(net.layers, net_inputs),
                                 kink_margin(encoder.layers, trace.inputs))
                if margin < 5e-3:
                    continue
                _, grads = inversion_loss(batch, net, encoder, lambda_tv=0.01, workers=1)

                def objective():
                    return inversion_loss(batch, net, encoder, lambda_tv=0.01, workers=1)[0]

                for layer, grad in zip(net.layers, grads):
                    if grad is None:
                        continue
                    self.assertGradientClose(grad.weights, numerical_gradient(objective, layer.params.weights))
                    self.assertGradientClose(grad.bias, numerical_gradient(objective, layer.params.bias))
                checked += 1
                break
            self.assertEqual(checked, 1)

    def test_threaded_matches_sequential(self):
        encoder = build_tiny(channels=2, seed=3)
        net = build_small_inverse(encoder, width=4, seed=3)
        rng = make_rng(3)
        batch = [encode(rng.uniform(size=(8, 8, 3)).astype(np.float32), encoder)[0] for _ in range(4)]
        loss_a, grads_a = inversion_loss(batch, net, encoder, 1e-6, workers=1)
        loss_b, grads_b = inversion_loss(batch, net, encoder, 1e-6, workers=3)
        self.assertEqual(loss_a, loss_b)
        for a, b in zip(grads_a, grads_b):
            if a is not None:
                np.testing.assert_array_equal(a.weights, b.weights)


class TestPoolsAndBatches(unittest.TestCase):

    def setUp(self):
        self.natural, self.paintings = synthetic_pools(8, size=8, seed=0)
        self.encoder = build_tiny(channels=2)

    def test_pool_exhausts_after_one_pass(self):
        pool = ImagePool(self.natural, "natural", make_rng(0))
        self.assertEqual(len(pool.draw(3)), 3)
        with self.assertRaises(PoolExhaustedError):
            pool.draw(2)
        pool.reshuffle()
        self.assertEqual(len(pool.draw(4)), 4)

    def test_empty_pool(self):
        with self.assertRaises(EmptyPoolError):
            ImagePool([], "painting", make_rng(0))

    def test_minibatch_composition(self):
        rng = make_rng(1)
        natural = ImagePool(self.natural, "natural", rng)
        paintings = ImagePool(self.paintings, "painting", rng)
        batch = make_minibatch(natural, paintings, self.encoder, SwapConfig(), rng, 2, 2, 3)
        self.assertEqual(len(batch), 7)
        self.assertTrue(all(acts.shape == (4, 4, 2) for acts in batch))
        full = make_minibatch(natural, paintings, self.encoder, SwapConfig(), rng, 1, 1, 1)
        np.testing.assert_array_equal(full[2], style_swap(full[0], full[1], SwapConfig()))

    def test_minibatch_checks_both_pools_before_drawing(self):
        rng = make_rng(2)
        natural = ImagePool(self.natural, "natural", rng)
        paintings = ImagePool(self.paintings[:1], "painting", rng)
        with self.assertRaises(PoolExhaustedError):
            make_minibatch(natural, paintings, self.encoder, SwapConfig(), rng, 2, 2, 4)
        self.assertEqual(natural.cursor, 0)

    def test_too_many_swapped(self):
        rng = make_rng(3)
        pool = ImagePool(self.natural, "natural", rng)
        with self.assertRaises(ConfigError):
            make_minibatch(pool, pool, self.encoder, SwapConfig(), rng, 1, 1, 2)

    def test_holdout_is_disjoint(self):
        images = [np.full((2, 2, 3), float(i)) for i in range(5)]
        train_part, held = split_holdout(images, 0.1, make_rng(0))
        self.assertEqual((len(train_part), len(held)), (4, 1))
        values = sorted(float(image[0, 0, 0]) for image in train_part + held)
        self.assertEqual(values, [0.0, 1.0, 2.0, 3.0, 4.0])


class TestTraining(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.natural, self.paintings = synthetic_pools(32, size=8, seed=5)
        self.encoder = build_tiny(channels=2, seed=5)
        self.net = build_small_inverse(self.encoder, width=4, seed=5)

    def _config(self, **overrides):
        values = dict(learning_rate=1e-2, epochs=1, checkpoint_every=100, workers=1)
        values.update(overrides)
        return TrainConfig(**values)

    def test_one_epoch(self):
        # 16 images per pool, 2 held out, 14 left: seven minibatches of two.
        report = train(self.natural, self.paintings, self.encoder, self.net, self._config())
        self.assertEqual([record.step for record in report.steps], list(range(1, 8)))
        self.assertTrue(all(record.epoch == 0 for record in report.steps))
        self.assertEqual(len(report.validation), 1)
        self.assertEqual(report.validation[0].step, 7)
        header, rows = report.csv_rows()
        self.assertEqual(header, ["step", "epoch", "train_loss", "val_real", "val_swapped"])
        self.assertEqual(rows[-1][3], report.validation[0].real_loss)

    def test_encoder_and_input_net_untouched(self):
        before_encoder = [np.copy(p) for layer in self.encoder.layers if layer.params
                          for p in (layer.params.weights, layer.params.bias)]
        before_net = [np.copy(p) for p in parameters(self.net)]
        report = train(self.natural, self.paintings, self.encoder, self.net, self._config(max_steps=2))
        after_encoder = [p for layer in self.encoder.layers if layer.params
                         for p in (layer.params.weights, layer.params.bias)]
        for a, b in zip(before_encoder, after_encoder):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(before_net, parameters(self.net)):
            np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(before_net[0], parameters(report.net)[0]))

    def test_checkpoints_on_cadence(self):
        path = os.path.join(self.tmp.name, "inverse.sswp")
        report = train(self.natural, self.paintings, self.encoder, self.net,
                       self._config(checkpoint_every=3), checkpoint_path=path)
        self.assertEqual(len(report.checkpoints), 3)
        self.assertTrue(os.path.isfile(path))
        self.assertTrue(os.path.isfile(path + ".state.npz"))
        restored = load_weights(path)
        self.assertIsInstance(restored, InverseNetSpec)
        for a, b in zip(parameters(restored), parameters(report.net)):
            np.testing.assert_array_equal(a, b)

    def test_resume_matches_uninterrupted_run(self):
        straight = train(self.natural, self.paintings, self.encoder, self.net, self._config(max_steps=5),
                         checkpoint_path=os.path.join(self.tmp.name, "straight.sswp"))
        path = os.path.join(self.tmp.name, "resumed.sswp")
        train(self.natural, self.paintings, self.encoder, self.net, self._config(max_steps=2),
              checkpoint_path=path)
        resumed = train(self.natural, self.paintings, self.encoder, self.net, self._config(max_steps=5),
                        checkpoint_path=path, resume=True)
        self.assertEqual([record.step for record in resumed.steps], [3, 4, 5])
        np.testing.assert_allclose(resumed.losses, straight.losses[2:], rtol=1e-6)

    def test_resume_needs_path(self):
        with self.assertRaises(ConfigError):
            train(self.natural, self.paintings, self.encoder, self.net, self._config(), resume=True)

    def test_nan_images_diverge(self):
        broken = [np.full((8, 8, 3), np.nan, dtype=np.float32) for _ in self.natural]
        with self.assertRaises(DivergenceError) as ctx:
            train(broken, self.paintings, self.encoder, self.net, self._config())
        self.assertIsNone(ctx.exception.checkpoint)

    def test_pool_smaller_than_minibatch(self):
        with self.assertRaises(EmptyPoolError):
            train(self.natural[:2], self.paintings, self.encoder, self.net, self._config())

    def test_wrong_pairing(self):
        with self.assertRaises(PairingError):
            train(self.natural, self.paintings, build_tiny(channels=2, seed=6), self.net, self._config())


class TestFeedforward(unittest.TestCase):

    def test_identity_pair_returns_swapped_pixels(self):
        rng = make_rng(9)
        content = rng.uniform(size=(6, 6, 3)).astype(np.float32)
        style = rng.uniform(size=(6, 6, 3)).astype(np.float32)
        image = feedforward_stylize(content, style, build_identity(), build_identity_inverse())
        np.testing.assert_allclose(image, style_swap(content, style, SwapConfig()), rtol=1e-6)

    def test_rejects_unpaired_net(self):
        with self.assertRaises(PairingError):
            feedforward_stylize(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), build_tiny(2), build_identity_inverse())


if __name__ == '__main__':
    unittest.main()
