import numpy as np
import pytest

from hexwin.errors import NumericError, ShapeError
from hexwin.numerics import (finite_diff_grad, gelu, gelu_vjp, layer_norm,
                             layer_norm_fwd, layer_norm_vjp, masked_softmax,
                             masked_softmax_vjp, relative_error)


class TestMaskedSoftmax:
    def test_uniform_symmetry(self):
        out = masked_softmax(np.zeros(3), np.ones(3, dtype=bool))
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-15)

    def test_single_valid_entry(self):
        out = masked_softmax(np.array([5.0, -100.0]), np.array([True, False]))
        np.testing.assert_allclose(out, [1.0, 0.0], atol=0)

    def test_hand_evaluated(self):
        # exp(ln 2) = 2, exp(0) = 1 -> 2/3, 1/3
        out = masked_softmax(np.array([np.log(2.0), 0.0]), np.ones(2, dtype=bool))
        np.testing.assert_allclose(out, [2 / 3, 1 / 3], atol=1e-12)

    def test_fully_invalid_slice_returns_zeros(self):
        out = masked_softmax(np.array([[1.0, 2.0], [3.0, 4.0]]),
                             np.array([[True, True], [False, False]]))
        np.testing.assert_allclose(out[1], [0.0, 0.0], atol=0)
        np.testing.assert_allclose(out[0].sum(), 1.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_valid_weights_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(0, 5, (4, 9))
        valid = rng.random((4, 9)) < 0.6
        valid[0] = True
        out = masked_softmax(scores, valid)
        sums = out.sum(axis=-1)
        expect = valid.any(axis=-1).astype(float)
        np.testing.assert_allclose(sums, expect, atol=1e-12)
        assert np.all(out[~valid] == 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_shift_invariance(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(0, 3, 11)
        valid = rng.random(11) < 0.7
        valid[0] = True
        shifted = masked_softmax(scores + 17.3, valid)
        np.testing.assert_allclose(masked_softmax(scores, valid), shifted,
                                   atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            masked_softmax(np.zeros(3), np.ones(4, dtype=bool))

    @pytest.mark.parametrize("seed", range(5))
    def test_vjp_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(0, 2, (2, 6))
        valid = rng.random((2, 6)) < 0.7
        valid[:, 0] = True
        upstream = rng.normal(0, 1, (2, 6))

        def f(x):
            return float(np.sum(masked_softmax(x, valid) * upstream))

        out = masked_softmax(scores, valid)
        analytic = masked_softmax_vjp(upstream, out)
        fd = finite_diff_grad(f, scores)
        assert relative_error(analytic, fd) < 1e-7


class TestLayerNorm:
    def test_constant_vector(self):
        out = layer_norm(np.ones(3), np.ones(3), np.zeros(3), 1e-5)
        np.testing.assert_allclose(out, np.zeros(3), atol=1e-12)

    def test_already_normalized(self):
        out = layer_norm(np.array([-1.0, 1.0]), np.ones(2), np.zeros(2), 0.0)
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-12)

    def test_normalize_then_affine(self):
        out = layer_norm(np.array([0.0, 2.0]), np.full(2, 2.0), np.ones(2), 0.0)
        np.testing.assert_allclose(out, [-1.0, 3.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_shift_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, 16)
        a, b = float(rng.uniform(0.2, 5.0)), float(rng.normal(0, 3))
        g, z = np.ones(16), np.zeros(16)
        np.testing.assert_allclose(layer_norm(x, g, z, 0.0),
                                   layer_norm(a * x + b, g, z, 0.0), atol=1e-9)

    def test_zero_length_axis(self):
        with pytest.raises(ShapeError):
            layer_norm(np.zeros((3, 0)), np.zeros(0), np.zeros(0))

    @pytest.mark.parametrize("seed", range(5))
    def test_vjp_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 2, (4, 7))
        gain = rng.normal(1, 0.3, 7)
        bias = rng.normal(0, 0.3, 7)
        upstream = rng.normal(0, 1, (4, 7))

        out, cache = layer_norm_fwd(x, gain, bias)
        d_x, d_gain, d_bias = layer_norm_vjp(upstream, cache)
        fd_x = finite_diff_grad(
            lambda v: float(np.sum(layer_norm(v, gain, bias) * upstream)), x)
        fd_g = finite_diff_grad(
            lambda v: float(np.sum(layer_norm(x, v, bias) * upstream)), gain)
        fd_b = finite_diff_grad(
            lambda v: float(np.sum(layer_norm(x, gain, v) * upstream)), bias)
        assert relative_error(d_x, fd_x) < 1e-7
        assert relative_error(d_gain, fd_g) < 1e-7
        assert relative_error(d_bias, fd_b) < 1e-7


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]))
        np.testing.assert_allclose(grad, [6.0], atol=1e-6)

    def test_linear_sum(self):
        x = np.arange(6, dtype=float).reshape(2, 3)
        grad = finite_diff_grad(lambda v: float(v.sum()), x)
        np.testing.assert_allclose(grad, np.ones((2, 3)), atol=1e-9)

    def test_non_finite_evaluation(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: float("nan"), np.zeros(2))

    def test_requires_positive_h(self):
        with pytest.raises(ShapeError):
            finite_diff_grad(lambda x: 0.0, np.zeros(1), h=0.0)


class TestGelu:
    def test_known_values(self):
        np.testing.assert_allclose(gelu(np.zeros(3)), np.zeros(3), atol=0)
        # gelu(x) -> x for large x, -> 0 for very negative x
        np.testing.assert_allclose(gelu(np.array([10.0])), [10.0], atol=1e-8)
        np.testing.assert_allclose(gelu(np.array([-10.0])), [0.0], atol=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_vjp_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 2, 9)
        upstream = rng.normal(0, 1, 9)
        analytic = gelu_vjp(upstream, x)
        fd = finite_diff_grad(lambda v: float(np.sum(gelu(v) * upstream)), x)
        assert relative_error(analytic, fd) < 1e-7


def test_relative_error_zero_for_zero_pair():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
