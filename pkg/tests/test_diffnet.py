import math
import unittest

import numpy as np

from fixtures import random_batch, random_params, small_data
from unlearnlab.diffnet import (
    Architecture,
    ClassifierParams,
    Direction,
    GradientSet,
    TrainConfig,
    apply_step,
    clip_grad_norm,
    confidences,
    epoch_batches,
    forward,
    group_accuracy,
    init_classifier,
    input_grad,
    kl_divergence,
    label_confidences,
    loss_grad,
    penultimate_features,
    sample_losses,
    soft_target_grad,
    softmax,
    weighted_loss_grad,
)
from unlearnlab.errors import ConfigError, DomainError, NumericError, ShapeError
from unlearnlab.taxonomy import DomainLevel


def perturbed(params: ClassifierParams, layer: int, kind: str, pos, delta: float):
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    target = weights[layer] if kind == "w" else biases[layer]
    target[pos] += delta
    return ClassifierParams(params.arch, tuple(weights), tuple(biases))


def numeric_grad(objective, params: ClassifierParams, eps=1e-6):
    """
    central differences of `objective` over every parameter entry.
    """
    weights, biases = [], []
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        for kind, array, out in (("w", w, weights), ("b", b, biases)):
            g = np.zeros_like(array)
            for pos in np.ndindex(array.shape):
                up = objective(perturbed(params, layer, kind, pos, eps))
                down = objective(perturbed(params, layer, kind, pos, -eps))
                g[pos] = (up - down) / (2 * eps)
            out.append(g)
    return GradientSet(tuple(weights), tuple(biases))


class TestGradients(unittest.TestCase):
    def assertClose(self, analytic: GradientSet, numeric: GradientSet):
        np.testing.assert_allclose(analytic.flat(), numeric.flat(), rtol=1e-4, atol=1e-6)

    def test_weighted_loss_grad(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                params = random_params(seed)
                x, y = random_batch(seed, 6, 4, 3)
                w = np.random.default_rng(seed + 100).normal(size=6)
                _, grads = weighted_loss_grad(params, x, y, w)
                numeric = numeric_grad(lambda p: weighted_loss_grad(p, x, y, w)[0], params)
                self.assertClose(grads, numeric)

    def test_soft_target_grad(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                params = random_params(seed, hidden_dims=(4,))
                x, _ = random_batch(seed, 5, 4, 3)
                rng = np.random.default_rng(seed + 200)
                targets = softmax(rng.normal(size=(5, 3)))
                w = rng.uniform(0.1, 1.0, 5)
                _, grads = soft_target_grad(params, x, targets, w)
                numeric = numeric_grad(
                    lambda p: soft_target_grad(p, x, targets, w)[0], params
                )
                self.assertClose(grads, numeric)

    def test_input_grad(self):
        eps = 1e-6
        for seed in range(10):
            with self.subTest(seed=seed):
                params = random_params(seed)
                x, y = random_batch(seed, 3, 4, 3)
                analytic = input_grad(params, x, y)
                for i, j in np.ndindex(x.shape):
                    up, down = x.copy(), x.copy()
                    up[i, j] += eps
                    down[i, j] -= eps
                    numeric = (
                        sample_losses(params, up, y)[i] - sample_losses(params, down, y)[i]
                    ) / (2 * eps)
                    self.assertAlmostEqual(analytic[i, j], numeric, delta=1e-5)

    def test_mean_loss(self):
        params = random_params(4)
        x, y = random_batch(4, 8, 4, 3)
        loss, grads = loss_grad(params, x, y)
        self.assertAlmostEqual(loss, float(sample_losses(params, x, y).mean()))
        _, weighted = weighted_loss_grad(params, x, y, np.full(8, 1 / 8))
        np.testing.assert_allclose(grads.flat(), weighted.flat())

    def test_empty_batch(self):
        params = random_params(0)
        with self.assertRaises(ShapeError):
            loss_grad(params, np.zeros((0, 4)), np.zeros(0, dtype=int))


class TestModel(unittest.TestCase):
    def test_layer_shapes(self):
        arch = Architecture(16, (64, 32), 12)
        self.assertEqual(arch.layer_shapes, [(16, 64), (64, 32), (32, 12)])
        params = init_classifier(arch, 0, 1.0)
        self.assertEqual([w.shape for w in params.weights], arch.layer_shapes)
        self.assertEqual([b.shape for b in params.biases], [(64,), (32,), (12,)])

    def test_zero_init(self):
        params = init_classifier(Architecture(16, (64, 32), 12), 5, 0.0)
        self.assertEqual(params.l1_norm(), 0.0)

    def test_init_is_seeded(self):
        arch = Architecture(4, (5,), 3)
        self.assertTrue(init_classifier(arch, 1, 1.0).same_as(init_classifier(arch, 1, 1.0)))
        self.assertFalse(init_classifier(arch, 1, 1.0).same_as(init_classifier(arch, 2, 1.0)))

    def test_init_scale(self):
        params = init_classifier(Architecture(400, (300,), 2), 0, 2.0)
        self.assertAlmostEqual(params.weights[0].std(), 2.0 / math.sqrt(400), delta=0.005)

    def test_uniform_logits(self):
        params = init_classifier(Architecture(4, (3,), 7), 0, 0.0)
        x, y = random_batch(0, 5, 4, 7)
        np.testing.assert_allclose(sample_losses(params, x, y), math.log(7))
        np.testing.assert_allclose(confidences(params, x), 1 / 7)
        np.testing.assert_allclose(label_confidences(params, x, y), 1 / 7)

    def test_bad_width(self):
        with self.assertRaises(ShapeError):
            Architecture(4, (0,), 3)
        params = random_params(0)
        with self.assertRaises(ShapeError):
            forward(params, np.zeros((2, 5)))

    def test_label_range(self):
        params = random_params(0)
        with self.assertRaises(DomainError):
            loss_grad(params, np.zeros((1, 4)), [3])

    def test_layer_mismatch(self):
        arch = Architecture(2, (3,), 2)
        with self.assertRaises(ShapeError):
            ClassifierParams(arch, (np.zeros((2, 3)),), (np.zeros(3),))

    def test_non_finite(self):
        arch = Architecture(2, (), 2)
        with self.assertRaises(NumericError):
            ClassifierParams(arch, (np.array([[np.nan, 0], [0, 0]]),), (np.zeros(2),))

    def test_read_only(self):
        params = random_params(0)
        with self.assertRaises(ValueError):
            params.weights[0][0, 0] = 1.0

    def test_penultimate(self):
        params = random_params(0)
        x, _ = random_batch(0, 3, 4, 3)
        self.assertEqual(penultimate_features(params, x).shape, (3, 3))
        flat = init_classifier(Architecture(4, (), 3), 0, 1.0)
        np.testing.assert_array_equal(penultimate_features(flat, x), x)

    def test_kl_zero_at_teacher(self):
        logits = np.random.default_rng(0).normal(size=(4, 5))
        np.testing.assert_allclose(kl_divergence(softmax(logits), logits), 0.0, atol=1e-12)


class TestSteps(unittest.TestCase):
    def test_zero_lr(self):
        params = random_params(1)
        x, y = random_batch(1, 4, 4, 3)
        _, grads = loss_grad(params, x, y)
        self.assertTrue(apply_step(params, grads, 0.0).same_as(params))

    def test_ascent_is_negated_descent(self):
        params = random_params(2)
        x, y = random_batch(2, 4, 4, 3)
        _, grads = loss_grad(params, x, y)
        up = apply_step(params, grads, 0.1, Direction.ASCENT)
        down = apply_step(params, grads, -0.1, Direction.DESCENT)
        self.assertTrue(up.same_as(down))
        self.assertTrue(apply_step(params, grads, 0.1, "ascent").same_as(up))

    def test_descent_lowers_loss(self):
        params = random_params(3)
        x, y = random_batch(3, 16, 4, 3)
        loss, grads = loss_grad(params, x, y)
        after, _ = loss_grad(apply_step(params, grads, 1e-3), x, y)
        self.assertLess(after, loss)

    def test_step_keeps_tag(self):
        params = random_params(0).retag("x")
        _, grads = loss_grad(params, *random_batch(0, 2, 4, 3))
        self.assertEqual(apply_step(params, grads, 0.1).tag, "x")

    def test_gradient_nan(self):
        with self.assertRaises(NumericError):
            GradientSet((np.array([np.inf]),), (np.zeros(1),))

    def test_clip_grad_norm(self):
        grads = GradientSet((np.array([[3.0]]),), (np.array([4.0]),))
        np.testing.assert_allclose(clip_grad_norm(grads, 1.0).flat(), [0.6, 0.8])
        self.assertIs(clip_grad_norm(grads, 5.0), grads)
        self.assertIs(clip_grad_norm(grads, 0.0), grads)
        with self.assertRaises(ConfigError):
            clip_grad_norm(grads, -1.0)

    def test_batches(self):
        rng = np.random.default_rng(0)
        batches = epoch_batches(10, 4, rng)
        self.assertEqual([len(b) for b in batches], [4, 4, 2])
        self.assertEqual(sorted(np.concatenate(batches).tolist()), list(range(10)))


class TestGroupAccuracy(unittest.TestCase):
    def test_empty_group(self):
        train, _, _ = small_data()
        params = init_classifier(Architecture(train.feature_dim, (4,), 9), 0, 1.0)
        acc = group_accuracy(params, train, [], DomainLevel.CLASS)
        self.assertEqual(acc.percent, 0.0)
        self.assertTrue(acc.empty)

    def test_out_of_range(self):
        train, _, _ = small_data()
        params = init_classifier(Architecture(train.feature_dim, (4,), 9), 0, 1.0)
        with self.assertRaises(DomainError):
            group_accuracy(params, train, [len(train)], DomainLevel.CLASS)
        small = init_classifier(Architecture(train.feature_dim, (4,), 3), 0, 1.0)
        with self.assertRaises(DomainError):
            group_accuracy(small, train, np.arange(len(train)), DomainLevel.CLASS)

    def test_constant_model(self):
        train, _, _ = small_data()
        arch = Architecture(train.feature_dim, (), 9)
        biases = np.zeros(9)
        biases[2] = 1.0
        params = ClassifierParams(arch, (np.zeros((train.feature_dim, 9)),), (biases,))
        idx = np.arange(len(train))
        expected = 100.0 * np.mean(train.class_ids == 2)
        self.assertAlmostEqual(group_accuracy(params, train, idx, "class").percent, expected)


class TestTrainConfig(unittest.TestCase):
    def test_errors(self):
        cases = {
            "learning_rate": dict(learning_rate=0.0),
            "batch_size": dict(batch_size=0),
            "epochs": dict(epochs=-1),
            "init_scale": dict(init_scale=0.0),
        }
        for field, kwargs in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(ConfigError) as ctx:
                    TrainConfig(**kwargs)
                self.assertEqual(ctx.exception.field, field)


if __name__ == "__main__":
    unittest.main()
