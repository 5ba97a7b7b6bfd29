import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memory_bias.errors import DomainError, NumericalError, ShapeError
from memory_bias.losses import (
    WeightScheme,
    analytic_bias,
    make_weights,
    power_scheme,
    weighted_cross_entropy,
    weighted_error,
)

SCHEME_POWERS = [-1.0, 0.0, 1.0, 2.0, math.inf]


def raw_scheme(weights, dt=1.0):
    w = np.asarray(weights, dtype=float)
    return WeightScheme("poly", 0.0, w.shape[0], dt, "none", w)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


class TestMakeWeights:
    def test_uniform(self):
        w = make_weights("poly", 4, 0.1, p=0.0).weights
        assert np.all(w == w[0]) and w[0] > 0

    def test_last_term_only(self):
        np.testing.assert_array_equal(make_weights("last", 4, 1.0, normalization="none").weights, [0, 0, 0, 1])
        w = make_weights("last", 4, 0.1).weights
        assert np.all(w[:3] == 0) and w[3] > 0

    def test_linear_power(self):
        w = make_weights("poly", 3, 1.0, p=1.0, normalization="none").weights
        np.testing.assert_array_equal(w, [1.0, 2.0, 3.0])
        w = make_weights("poly", 3, 1.0, p=1.0).weights
        np.testing.assert_allclose(w / w[0], [1.0, 2.0, 3.0], rtol=1e-14)

    def test_negative_power_is_finite(self):
        w = make_weights("poly", 64, 0.1, p=-1.0, normalization="none").weights
        assert w[0] == pytest.approx(10.0) and np.all(np.isfinite(w))

    def test_infinite_power_routes_to_last(self):
        assert power_scheme(math.inf, 5, 0.1).family == "last"

    def test_weight_sum_normalization(self):
        assert math.fsum(make_weights("poly", 10, 1.0, p=2.0, normalization="weight_sum").weights) == pytest.approx(1.0, abs=1e-15)

    def test_errors(self):
        with pytest.raises(DomainError):
            make_weights("poly", 4, 0.1, p=-2.0)
        with pytest.raises(DomainError):
            make_weights("cubic", 4, 0.1)
        with pytest.raises(DomainError):
            make_weights("poly", 0, 0.1)
        with pytest.raises(NumericalError):
            make_weights("poly", 64, 10.0, p=400.0)


class TestAnalyticBias:
    def test_uniform_matches_closed_form(self):
        for n in (4, 64, 1000):
            curve = analytic_bias(make_weights("poly", n, 1.0 / n, p=0.0))
            np.testing.assert_allclose(curve.values, 2 * (1 - curve.s), rtol=0, atol=1e-12)

    def test_linear_weight_unnormalized(self):
        # discrete tail sum of (j+1) dt^2 for j >= k, summed exactly
        for n in (10, 20, 40):
            dt = 1.0 / n
            curve = analytic_bias(make_weights("poly", n, dt, p=1.0, normalization="none"))
            oracle = [math.fsum((j + 1) * dt * dt for j in range(k, n)) for k in range(n)]
            np.testing.assert_allclose(curve.values, oracle, rtol=1e-13)
        # the continuum limit is (1 - s^2) / 2 with O(dt) error
        errs = []
        for n in (100, 200, 400):
            curve = analytic_bias(make_weights("poly", n, 1.0 / n, p=1.0, normalization="none"))
            errs.append(np.max(np.abs(curve.values - (1 - curve.s**2) / 2)))
        assert 1.8 < errs[0] / errs[1] < 2.2 and 1.8 < errs[1] / errs[2] < 2.2

    def test_last_term_bias_is_constant(self):
        b = analytic_bias(make_weights("last", 64, 0.1)).values
        assert np.all(b == b[0]) and b[0] > 0

    @pytest.mark.parametrize("p", SCHEME_POWERS)
    def test_tail_sum_identity_and_normalization(self, p):
        scheme = power_scheme(p, 64, 0.1)
        curve = analytic_bias(scheme)
        b = np.append(curve.values, 0.0)
        step = b[:-1] - b[1:]
        np.testing.assert_allclose(step, scheme.weights * scheme.dt, rtol=0, atol=1e-12 * b[0])
        assert curve.integral() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(curve.values) <= 0) and np.all(curve.values >= 0)

    @pytest.mark.parametrize("p1,p2", [(0.0, 1.0), (0.0, 2.0), (1.0, 2.0), (0.5, 5.5), (2.0, 10.0)])
    def test_curves_cross_once(self, p1, p2):
        b1 = analytic_bias(power_scheme(p1, 64, 0.1)).values
        b2 = analytic_bias(power_scheme(p2, 64, 0.1)).values
        assert b2[0] < b1[0] and b2[-1] > b1[-1]
        sign_changes = np.count_nonzero(np.diff(np.sign(b2 - b1)))
        assert sign_changes == 1


class TestWeightedError:
    def test_zero_residual(self):
        scheme = power_scheme(2.0, 8, 0.1)
        y = np.random.default_rng(0).normal(size=8)
        for kind in ("absolute", "squared"):
            value, grad = weighted_error(y, y, scheme, kind)
            assert value == 0.0 and np.all(grad == 0)

    def test_small_example(self):
        value, grad = weighted_error([0.0, 0.0], [0.0, 1.0], raw_scheme([1.0, 1.0]), "absolute")
        assert value == 1.0
        np.testing.assert_array_equal(grad, [0.0, -1.0])

    def test_last_term_ignores_earlier(self):
        scheme = make_weights("last", 2, 1.0)
        value, _ = weighted_error([9.0, 1.0], [5.0, 1.0], scheme, "absolute")
        assert value == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            weighted_error(np.zeros(3), np.zeros(4), power_scheme(0.0, 3, 0.1))
        with pytest.raises(ShapeError):
            weighted_error(np.zeros(4), np.zeros(4), power_scheme(0.0, 3, 0.1))

    def test_uniform_absolute_is_mae(self):
        rng = np.random.default_rng(3)
        pred, target = rng.normal(size=(5, 16)), rng.normal(size=(5, 16))
        value, _ = weighted_error(pred, target, raw_scheme(np.ones(16), dt=1 / 16), "absolute")
        assert value == pytest.approx(np.mean(np.abs(pred - target)), rel=1e-14)

    @pytest.mark.parametrize("kind", ["absolute", "squared"])
    @pytest.mark.parametrize("p", SCHEME_POWERS)
    def test_gradient_matches_finite_differences(self, kind, p):
        rng = np.random.default_rng(7)
        scheme = power_scheme(p, 12, 0.1)
        pred, target = rng.normal(size=(3, 12)), rng.normal(size=(3, 12))
        _, grad = weighted_error(pred, target, scheme, kind)
        numeric = central_diff(lambda x: weighted_error(x, target, scheme, kind)[0], pred.copy())
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)

    @settings(max_examples=50)
    @given(arrays(np.float64, 8, elements=st.floats(-5, 5)), arrays(np.float64, 8, elements=st.floats(-5, 5)),
           arrays(np.float64, 8, elements=st.floats(-5, 5)), st.floats(0.01, 100))
    def test_scaling_weights_preserves_comparisons(self, a, b, target, c):
        base = make_weights("poly", 8, 0.5, p=1.5)
        scaled = WeightScheme("poly", 1.5, 8, 0.5, "none", base.weights * c)
        for kind in ("absolute", "squared"):
            va, ga = weighted_error(a, target, base, kind)
            sa, gsa = weighted_error(a, target, scaled, kind)
            vb, _ = weighted_error(b, target, base, kind)
            sb, _ = weighted_error(b, target, scaled, kind)
            assert sa == pytest.approx(c * va, rel=1e-12, abs=1e-300)
            np.testing.assert_allclose(gsa, c * ga, rtol=1e-12)
            if abs(va - vb) > 1e-9 * (abs(va) + abs(vb)):
                assert (va < vb) == (sa < sb)


class TestWeightedCrossEntropy:
    def test_uniform_logits(self):
        for k in (2, 5, 10):
            scheme = power_scheme(2.0, 6, 1.0, normalization="weight_sum")
            value, _ = weighted_cross_entropy(np.zeros((6, k)), np.arange(6) % k, scheme)
            assert value == pytest.approx(math.log(k), rel=1e-14)

    def test_confident_correct_logits_vanish(self):
        scheme = power_scheme(0.0, 4, 1.0, normalization="weight_sum")
        labels = np.array([0, 1, 2, 1])
        values = []
        for margin in (1.0, 10.0, 40.0):
            logits = np.zeros((4, 3))
            logits[np.arange(4), labels] = margin
            values.append(weighted_cross_entropy(logits, labels, scheme)[0])
        assert values[0] > values[1] > values[2] and values[2] < 1e-16

    @pytest.mark.parametrize("p", [0.0, 2.0, math.inf])
    def test_gradient_matches_finite_differences(self, p):
        rng = np.random.default_rng(11)
        scheme = power_scheme(p, 7, 1.0, normalization="weight_sum")
        logits = rng.normal(size=(2, 7, 4))
        labels = rng.integers(0, 4, size=(2, 7))
        _, grad = weighted_cross_entropy(logits, labels, scheme)
        numeric = central_diff(lambda z: weighted_cross_entropy(z, labels, scheme)[0], logits.copy())
        err = np.max(np.abs(grad - numeric)) / np.max(np.abs(numeric))
        assert err < 1e-6

    def test_label_out_of_range(self):
        scheme = power_scheme(0.0, 3, 1.0, normalization="weight_sum")
        with pytest.raises(DomainError):
            weighted_cross_entropy(np.zeros((3, 4)), np.array([0, 4, 1]), scheme)
