import math

import numpy as np
import pytest

from handgcn.errors import DimensionMismatch
from handgcn.numerics import (
    RngStream,
    derive_seed,
    finite_diff_grad,
    leaky_relu,
    leaky_relu_grad,
    log_softmax,
    matmul,
    xavier_uniform,
)


def naive_matmul(a, b):
    """Triple-loop reference, kept deliberately independent of numpy matmul."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        b = np.arange(12.0).reshape(3, 4)
        np.testing.assert_array_equal(matmul(np.eye(3), b), b)

    def test_small_example(self):
        c = matmul([[1, 2], [3, 4]], [[0], [1]])
        np.testing.assert_array_equal(c, [[2], [4]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 7))
        b = rng.standard_normal((7, 3))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_associativity(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = rng.standard_normal((4, 6))
            b = rng.standard_normal((6, 5))
            c = rng.standard_normal((5, 3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            np.testing.assert_allclose(left, right, rtol=1e-9)

    def test_double_transpose(self):
        a = np.random.default_rng(2).standard_normal((3, 5))
        np.testing.assert_array_equal(a.T.T, a)


class TestLeakyRelu:
    def test_positive_passthrough(self):
        assert leaky_relu(np.array(1.0), 0.2) == 1.0

    def test_negative_scaled(self):
        assert leaky_relu(np.array(-1.0), 0.2) == pytest.approx(-0.2)

    def test_gradient_values(self):
        grad = leaky_relu_grad(np.array([-3.0, 0.0, 2.0]), 0.2)
        np.testing.assert_array_equal(grad, [0.2, 1.0, 1.0])


class TestLogSoftmax:
    def test_uniform_logits(self):
        out = log_softmax(np.zeros(29))
        np.testing.assert_allclose(out, -math.log(29), atol=1e-15)

    def test_no_overflow_on_extreme_logits(self):
        out = log_softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(0.0, abs=1e-12)
        assert out[1] == pytest.approx(-1000.0, rel=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.standard_normal(29)
            shifted = log_softmax(v + rng.uniform(-100, 100))
            np.testing.assert_allclose(shifted, log_softmax(v), atol=1e-12)

    def test_rows_exponentiate_to_one(self):
        rng = np.random.default_rng(4)
        v = rng.standard_normal((8, 29)) * 10
        sums = np.exp(log_softmax(v)).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


class TestXavierUniform:
    def test_bound(self):
        w = xavier_uniform(3, 3, RngStream(0))
        assert np.abs(w).max() <= 1.0  # sqrt(6/6)

    def test_empirical_mean(self):
        rng = RngStream(5)
        draws = np.concatenate([xavier_uniform(4, 4, rng).ravel() for _ in range(10_000)])
        assert abs(draws.mean()) < 0.02

    def test_deterministic(self):
        np.testing.assert_array_equal(
            xavier_uniform(6, 9, RngStream(42)), xavier_uniform(6, 9, RngStream(42))
        )


class TestRngStream:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(RngStream(9).random(16), RngStream(9).random(16))

    def test_derived_streams_differ(self):
        root = RngStream(9)
        a = root.derive(0).random(16)
        b = root.derive(1).random(16)
        assert not np.array_equal(a, b)

    def test_derivation_does_not_consume_parent(self):
        root = RngStream(9)
        root.derive(0)
        after = root.random(4)
        np.testing.assert_array_equal(after, RngStream(9).random(4))

    def test_derive_seed_stable(self):
        assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
        assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda t: float((t ** 2).sum()), np.array([[1.0, 2.0]]), 1e-5)
        np.testing.assert_allclose(grad, [[2.0, 4.0]], atol=1e-6)

    def test_constant_function(self):
        grad = finite_diff_grad(lambda t: 3.5, np.ones((3, 2)), 1e-5)
        np.testing.assert_array_equal(grad, np.zeros((3, 2)))
