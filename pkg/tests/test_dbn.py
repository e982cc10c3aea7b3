"""Stacked model: forward pass, fine-tuning gradients, training behavior."""

import math

import numpy as np
import pytest

from flowstate.baselines import lda_predict, lda_train
from flowstate.dbn import (
    Dbn,
    DbnConfig,
    Rbm,
    attach_head,
    fine_tune,
    forward,
    loss_and_grads,
    mean_cross_entropy,
    predict,
    pretrain,
    train,
)
from flowstate.errors import ArityMismatch, EmptyTrainingSet, ValueOutOfRange
from flowstate.records import TrafficState
from flowstate.rng import stream


def _random_dbn(rng, sizes, n_classes=3, scale=0.5):
    rbms = tuple(
        Rbm(scale * rng.standard_normal((v, h)), rng.standard_normal(v), rng.standard_normal(h))
        for v, h in zip(sizes, sizes[1:])
    )
    return Dbn(rbms, scale * rng.standard_normal((sizes[-1], n_classes)), rng.standard_normal(n_classes))


def _forward_oracle(dbn, x):
    h = list(x)
    for rbm in dbn.rbms:
        nxt = []
        for j in range(rbm.n_hidden):
            z = sum(rbm.W[i, j] * h[i] for i in range(rbm.n_visible)) + rbm.a[j]
            nxt.append(1.0 / (1.0 + math.exp(-z)))
        h = nxt
    logits = [
        sum(dbn.W_out[i, c] * h[i] for i in range(len(h))) + dbn.c_out[c]
        for c in range(dbn.n_classes)
    ]
    m = max(logits)
    exps = [math.exp(z - m) for z in logits]
    total = sum(exps)
    return [e / total for e in exps]


class TestForward:
    def test_all_zero_parameters_give_uniform(self):
        dbn = Dbn(
            (Rbm(np.zeros((4, 5)), np.zeros(4), np.zeros(5)),),
            np.zeros((5, 3)),
            np.zeros(3),
        )
        assert np.allclose(forward(dbn, np.zeros(4)), 1 / 3, atol=1e-15)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        dbn = _random_dbn(rng, [6, 7, 4])
        for _ in range(50):
            p = forward(dbn, rng.uniform(0, 1, 6))
            assert np.all(p > 0)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        dbn = _random_dbn(rng, [5, 4, 3])
        for _ in range(20):
            x = rng.uniform(0, 1, 5)
            assert np.allclose(forward(dbn, x), _forward_oracle(dbn, x), atol=1e-12)

    def test_arity_mismatch(self):
        dbn = _random_dbn(np.random.default_rng(2), [5, 4])
        with pytest.raises(ArityMismatch):
            forward(dbn, np.zeros(6))


class TestPredict:
    def _biased_head(self, c_out):
        # zero weights leave the head biases as the only signal
        rbm = Rbm(np.zeros((3, 3)), np.zeros(3), np.zeros(3))
        return Dbn((rbm,), np.zeros((3, 3)), np.array(c_out, dtype=float))

    def test_argmax(self):
        dbn = self._biased_head([2.0, 0.0, -1.0])  # forward ~ (0.85, 0.11, 0.04)
        assert predict(dbn, np.zeros(3)) is TrafficState.FREE

    def test_three_way_tie_goes_congested(self):
        dbn = Dbn(
            (Rbm(np.zeros((4, 5)), np.zeros(4), np.zeros(5)),),
            np.zeros((5, 3)),
            np.zeros(3),
        )
        assert predict(dbn, np.zeros(4)) is TrafficState.CONGESTED

    def test_two_way_tie_prefers_more_congested(self):
        dbn = self._biased_head([1.0, 1.0, 0.0])  # free and steady tie
        assert predict(dbn, np.zeros(3)) is TrafficState.STEADY


class TestPretrain:
    def test_zero_epochs_returns_initialization(self):
        cfg = DbnConfig(layer_sizes=(6, 4), unsup_epochs=0, seed=3)
        data = np.random.default_rng(4).uniform(0, 1, (30, 6))
        rbms = pretrain(cfg, data, stream(3))
        fresh = stream(3)
        from flowstate.dbn import init_rbm

        expected = init_rbm(6, 4, fresh)
        assert np.array_equal(rbms[0].W, expected.W)

    def test_structure_single_rbm(self):
        cfg = DbnConfig(layer_sizes=(23, 300), unsup_epochs=1, seed=0)
        data = np.random.default_rng(5).uniform(0, 1, (50, 23))
        rbms = pretrain(cfg, data, stream(0))
        assert len(rbms) == 1
        assert rbms[0].W.shape == (23, 300)

    def test_deterministic(self):
        cfg = DbnConfig(layer_sizes=(8, 6, 5), unsup_epochs=3, seed=11, batch_size=10)
        data = np.random.default_rng(6).uniform(0, 1, (40, 8))
        a = pretrain(cfg, data, stream(11))
        b = pretrain(cfg, data, stream(11))
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.W, rb.W)
            assert np.array_equal(ra.b, rb.b)
            assert np.array_equal(ra.a, rb.a)

    def test_rejects_bad_inputs(self):
        cfg = DbnConfig(layer_sizes=(4, 3))
        with pytest.raises(ArityMismatch):
            pretrain(cfg, np.zeros((5, 3)), stream(0))
        with pytest.raises(ValueOutOfRange):
            pretrain(cfg, np.full((5, 4), 1.5), stream(0))


def _fd_full_gradient(dbn, x, y, h=1e-5):
    """Central differences over every trainable tensor of the network."""

    def rebuild(layer_arrays, W_out, c_out):
        rbms = tuple(
            Rbm(W, rbm.b, a) for rbm, (W, a) in zip(dbn.rbms, layer_arrays)
        )
        return Dbn(rbms, W_out, c_out)

    def loss_of(layer_arrays, W_out, c_out):
        return mean_cross_entropy(rebuild(layer_arrays, W_out, c_out), x, y)

    layers = [(rbm.W.copy(), rbm.a.copy()) for rbm in dbn.rbms]
    grads_layers = []
    for li, (W, a) in enumerate(layers):
        gW = np.zeros_like(W)
        it = np.nditer(W, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = [(w.copy(), aa.copy()) for w, aa in layers]
            minus = [(w.copy(), aa.copy()) for w, aa in layers]
            plus[li][0][idx] += h
            minus[li][0][idx] -= h
            gW[idx] = (loss_of(plus, dbn.W_out, dbn.c_out) - loss_of(minus, dbn.W_out, dbn.c_out)) / (2 * h)
        ga = np.zeros_like(a)
        for j in range(a.shape[0]):
            plus = [(w.copy(), aa.copy()) for w, aa in layers]
            minus = [(w.copy(), aa.copy()) for w, aa in layers]
            plus[li][1][j] += h
            minus[li][1][j] -= h
            ga[j] = (loss_of(plus, dbn.W_out, dbn.c_out) - loss_of(minus, dbn.W_out, dbn.c_out)) / (2 * h)
        grads_layers.append((gW, ga))
    gW_out = np.zeros_like(dbn.W_out)
    it = np.nditer(dbn.W_out, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        plus, minus = dbn.W_out.copy(), dbn.W_out.copy()
        plus[idx] += h
        minus[idx] -= h
        gW_out[idx] = (loss_of(layers, plus, dbn.c_out) - loss_of(layers, minus, dbn.c_out)) / (2 * h)
    gc_out = np.zeros_like(dbn.c_out)
    for c in range(dbn.c_out.shape[0]):
        plus, minus = dbn.c_out.copy(), dbn.c_out.copy()
        plus[c] += h
        minus[c] -= h
        gc_out[c] = (loss_of(layers, dbn.W_out, plus) - loss_of(layers, dbn.W_out, minus)) / (2 * h)
    return grads_layers, gW_out, gc_out


def _flatten(layer_grads, gW_out, gc_out):
    parts = []
    for gW, ga in layer_grads:
        parts += [gW.ravel(), ga.ravel()]
    parts += [gW_out.ravel(), gc_out.ravel()]
    return np.concatenate(parts)


class TestFineTuneGradient:
    def test_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for trial in range(10):
            dbn = _random_dbn(rng, [4, 5], n_classes=3, scale=0.8)
            x = rng.uniform(0, 1, (12, 4))
            y = rng.integers(0, 3, 12)
            _, layer_grads, gW_out, gc_out = loss_and_grads(dbn, x, y)
            fd_layers, fd_W_out, fd_c_out = _fd_full_gradient(dbn, x, y)
            got = _flatten(layer_grads, gW_out, gc_out)
            want = _flatten(fd_layers, fd_W_out, fd_c_out)
            rel = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12)
            assert rel < 1e-4, f"trial {trial}: relative error {rel}"


class TestFineTune:
    def test_zero_iterations_is_identity(self):
        rng = np.random.default_rng(8)
        dbn = _random_dbn(rng, [6, 5])
        cfg = DbnConfig(layer_sizes=(6, 5), sup_iters=0)
        tuned = fine_tune(dbn, rng.uniform(0, 1, (20, 6)), rng.integers(0, 3, 20), cfg, stream(0))
        assert np.array_equal(tuned.W_out, dbn.W_out)
        assert np.array_equal(tuned.rbms[0].W, dbn.rbms[0].W)

    def test_empty_training_set(self):
        dbn = _random_dbn(np.random.default_rng(9), [4, 3])
        cfg = DbnConfig(layer_sizes=(4, 3))
        with pytest.raises(EmptyTrainingSet):
            fine_tune(dbn, np.zeros((0, 4)), np.zeros(0, dtype=int), cfg, stream(0))

    def _toy_separable(self, rng, n=120):
        # two Gaussian blobs, clearly separated along both axes
        x0 = rng.normal(0.2, 0.03, (n // 2, 2))
        x1 = rng.normal(0.8, 0.03, (n // 2, 2))
        x = np.clip(np.vstack([x0, x1]), 0, 1)
        y = np.array([0] * (n // 2) + [1] * (n // 2))
        return x, y

    def test_linearly_separable_toy_reaches_perfect_accuracy(self):
        rng = np.random.default_rng(10)
        x, y = self._toy_separable(rng)
        # separability oracle: a linear classifier must already fit this
        linear = lda_train(x, y)
        assert all(int(lda_predict(linear, row)) == int(lab) for row, lab in zip(x, y))
        cfg = DbnConfig(layer_sizes=(2, 16), sup_iters=500, sup_lr=0.5, batch_size=20, seed=5)
        model = train(cfg, x, y)
        from flowstate.dbn import predict_batch

        assert np.all(predict_batch(model, x) == y)

    def test_more_iterations_strictly_lower_training_loss(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, (80, 6))
        y = (x[:, 0] + x[:, 1] > 1.0).astype(int)
        base = DbnConfig(layer_sizes=(6, 12), unsup_epochs=2, batch_size=16, seed=2)
        rbms = pretrain(base, x, stream(2, 0))
        dbn0 = attach_head(rbms, 3, stream(2, 1))
        short = fine_tune(dbn0, x, y, DbnConfig(layer_sizes=(6, 12), sup_iters=20, batch_size=16), stream(2, 2))
        long = fine_tune(dbn0, x, y, DbnConfig(layer_sizes=(6, 12), sup_iters=200, batch_size=16), stream(2, 2))
        assert mean_cross_entropy(long, x, y) < mean_cross_entropy(short, x, y)


class TestTrainDeterminism:
    def test_identical_seeds_identical_models(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0, 1, (60, 5))
        y = rng.integers(0, 3, 60)
        cfg = DbnConfig(layer_sizes=(5, 8, 6), unsup_epochs=2, sup_iters=30, batch_size=16, seed=9)
        a = train(cfg, x, y)
        b = train(cfg, x, y)
        for ra, rb in zip(a.rbms, b.rbms):
            assert np.array_equal(ra.W, rb.W)
        assert np.array_equal(a.W_out, b.W_out)
        assert np.array_equal(a.c_out, b.c_out)

    def test_forward_finite_for_extreme_inputs(self):
        rng = np.random.default_rng(13)
        dbn = _random_dbn(rng, [4, 3], scale=200.0)
        for x in (np.zeros(4), np.ones(4), np.full(4, 0.5)):
            p = forward(dbn, x)
            assert np.all(np.isfinite(p)) and np.all(p > 0)
            assert abs(p.sum() - 1.0) < 1e-12
