import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwm.classifier import (
    MlpClassifier,
    log_softmax,
    make_constant_classifier,
    softmax,
)
from cwm.rng import RngHandle

from conftest import central_diff, random_classifier, rel_err


class TestLogSoftmax:
    def test_zero_logits_uniform(self):
        got = log_softmax(np.zeros(4))
        np.testing.assert_allclose(got, -math.log(4.0), rtol=1e-15)

    def test_shift_invariance(self):
        logits = np.array([0.3, -1.0, 2.5])
        np.testing.assert_allclose(
            log_softmax(logits + 7.0), log_softmax(logits), atol=1e-12
        )

    def test_extreme_logits_no_overflow(self):
        got = log_softmax(np.array([1000.0, 0.0]))
        assert got[0] == pytest.approx(0.0, abs=1e-12)
        assert got[1] == pytest.approx(-1000.0, rel=1e-12)
        assert np.all(np.isfinite(got))

    @given(st.lists(st.floats(min_value=-30, max_value=30), min_size=1, max_size=8))
    def test_exp_sums_to_one(self, logits):
        w = np.exp(log_softmax(np.array(logits)))
        assert np.all(w >= 0.0) and np.all(w <= 1.0)
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_rowwise_on_matrix(self):
        logits = np.array([[0.0, 0.0], [5.0, 5.0]])
        got = np.exp(log_softmax(logits))
        np.testing.assert_allclose(got, 0.5, atol=1e-15)

    def test_softmax_matches_exp_log_softmax(self):
        logits = np.array([0.1, -2.0, 3.0])
        np.testing.assert_allclose(softmax(logits), np.exp(log_softmax(logits)), atol=1e-15)


class TestLogits:
    def test_all_zero_parameters_give_zero_logits(self):
        sizes = [2, 4, 3]
        weights = [np.zeros((2, 4)), np.zeros((4, 3))]
        biases = [np.zeros(4), np.zeros(3)]
        clf = MlpClassifier(weights, biases)
        np.testing.assert_array_equal(clf.logits(np.array([0.7, -0.3])), np.zeros(3))

    def test_single_linear_layer_zero_weights_returns_bias(self):
        b = np.array([1.0, -2.0, 0.5])
        clf = MlpClassifier([np.zeros((2, 3))], [b.copy()])
        for z in (np.zeros(2), np.array([5.0, -7.0])):
            np.testing.assert_array_equal(clf.logits(z), b)

    def test_matches_independent_matrix_chain(self):
        rng = RngHandle(21)
        clf = random_classifier(3, 4, (5, 6), rng)
        z = rng.normal(3)
        a = z.copy()
        for w, b in zip(clf.weights[:-1], clf.biases[:-1]):
            a = np.tanh(a @ w + b)
        expected = a @ clf.weights[-1] + clf.biases[-1]
        np.testing.assert_allclose(clf.logits(z), expected, atol=1e-12)

    def test_batch_rows_match_single_calls(self):
        rng = RngHandle(3)
        clf = random_classifier(2, 3, (8,), rng)
        Z = rng.normal((6, 2))
        batch = clf.logits(Z)
        singles = np.array([clf.logits(z) for z in Z])
        np.testing.assert_allclose(batch, singles, atol=1e-14)

    def test_dimension_mismatch(self):
        clf = MlpClassifier([np.zeros((2, 3))], [np.zeros(3)])
        with pytest.raises(ValueError):
            clf.logits(np.zeros(5))

    def test_log_weights_are_log_softmax_of_logits(self):
        rng = RngHandle(8)
        clf = random_classifier(2, 4, (6,), rng)
        z = rng.normal(2)
        np.testing.assert_allclose(
            clf.log_weights(z), log_softmax(clf.logits(z)), atol=1e-15
        )


class TestBackprop:
    def test_zero_upstream_gives_zero_grads(self):
        rng = RngHandle(0)
        clf = random_classifier(2, 3, (8,), rng)
        g = clf.backprop(rng.normal(2), np.zeros(3))
        for dw, db in zip(g.d_weights, g.d_biases):
            assert not dw.any() and not db.any()
        assert not g.d_input.any()

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_parameter_grads_match_finite_differences(self, seed):
        rng = RngHandle(seed)
        clf = random_classifier(2, 3, (8,), rng)
        z = rng.normal(2)
        upstream = rng.normal(3)
        g = clf.backprop(z, upstream)

        flat0 = np.concatenate(
            [w.ravel() for w in clf.weights] + [b.ravel() for b in clf.biases]
        )
        n_w = sum(w.size for w in clf.weights)

        def f(theta):
            ws, bs, pos = [], [], 0
            for w in clf.weights:
                ws.append(theta[pos : pos + w.size].reshape(w.shape))
                pos += w.size
            for b in clf.biases:
                bs.append(theta[pos : pos + b.size])
                pos += b.size
            return float(upstream @ MlpClassifier(ws, bs).logits(z))

        numeric = central_diff(f, flat0, eps=1e-5)
        analytic = np.concatenate(
            [dw.ravel() for dw in g.d_weights] + [db.ravel() for db in g.d_biases]
        )
        assert np.max(rel_err(analytic, numeric)) < 1e-6
        assert n_w + sum(b.size for b in clf.biases) == flat0.size

    def test_input_grad_matches_finite_differences(self):
        rng = RngHandle(5)
        clf = random_classifier(2, 3, (8,), rng)
        z = rng.normal(2)
        upstream = rng.normal(3)
        g = clf.backprop(z, upstream)

        def f(zz):
            return float(upstream @ clf.logits(zz))

        numeric = central_diff(f, z, eps=1e-5)
        assert np.max(rel_err(g.d_input, numeric)) < 1e-6

    def test_batch_backprop_sums_per_row_grads(self):
        rng = RngHandle(6)
        clf = random_classifier(2, 3, (4,), rng)
        Z = rng.normal((5, 2))
        U = rng.normal((5, 3))
        batch = clf.backprop(Z, U)
        singles = [clf.backprop(z, u) for z, u in zip(Z, U)]
        for layer in range(len(clf.weights)):
            np.testing.assert_allclose(
                batch.d_weights[layer],
                sum(s.d_weights[layer] for s in singles),
                atol=1e-12,
            )
            np.testing.assert_allclose(
                batch.d_biases[layer],
                sum(s.d_biases[layer] for s in singles),
                atol=1e-12,
            )
        np.testing.assert_allclose(
            batch.d_input, np.array([s.d_input for s in singles]), atol=1e-12
        )

    def test_forward_cache_reuse_matches_fresh_backprop(self):
        rng = RngHandle(7)
        clf = random_classifier(3, 4, (6, 5), rng)
        Z = rng.normal((8, 3))
        U = rng.normal((8, 4))
        logits, acts = clf.forward_cache(Z)
        np.testing.assert_allclose(logits, clf.logits(Z), atol=1e-15)
        cached = clf.backprop(Z, U, acts=acts)
        fresh = clf.backprop(Z, U)
        for a, b in zip(cached.d_weights, fresh.d_weights):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(cached.d_input, fresh.d_input)


class TestMakeConstantClassifier:
    def test_fair_coin_weights_everywhere(self):
        rng = RngHandle(1)
        clf = make_constant_classifier(2, np.array([0.5, 0.5]), rng=RngHandle(0))
        for _ in range(100):
            z = rng.normal(2) * 5.0
            np.testing.assert_allclose(
                np.exp(clf.log_weights(z)), [0.5, 0.5], atol=1e-12
            )

    def test_general_simplex_weights(self):
        pis = np.array([0.2, 0.3, 0.5])
        clf = make_constant_classifier(2, pis, rng=RngHandle(0))
        rng = RngHandle(2)
        deviations = []
        for _ in range(1000):
            z = rng.normal(2) * 10.0
            deviations.append(np.max(np.abs(np.exp(clf.log_weights(z)) - pis)))
        assert max(deviations) < 1e-12

    def test_single_class_degenerate(self):
        clf = make_constant_classifier(3, np.array([1.0]), rng=RngHandle(0))
        z = RngHandle(3).normal(3)
        np.testing.assert_allclose(np.exp(clf.log_weights(z)), [1.0], atol=1e-15)

    def test_last_layer_structure(self):
        pis = np.array([0.25, 0.75])
        clf = make_constant_classifier(2, pis, hidden_sizes=(4,), rng=RngHandle(0))
        assert not clf.weights[-1].any()
        np.testing.assert_allclose(clf.biases[-1], np.log(pis), atol=1e-15)

    def test_rejects_non_simplex(self):
        with pytest.raises(ValueError):
            make_constant_classifier(2, np.array([0.5, 0.6]), rng=RngHandle(0))

    def test_rejects_zero_probability(self):
        with pytest.raises(ValueError):
            make_constant_classifier(2, np.array([1.0, 0.0]), rng=RngHandle(0))
