"""Dense float64 kernels, seeded random streams, and a finite-difference oracle.

Matrices are plain C-contiguous ``numpy.float64`` arrays (row-major), which
keeps every kernel a one-liner over BLAS while the contracts (shape checks,
activation conventions, reproducible initialization) live here.

Random streams wrap NumPy's PCG64 bit generator seeded through
``SeedSequence(entropy=seed, spawn_key=key)``.  PCG64 is fully specified and
platform independent: equal seeds and derivation keys give bit-identical
streams everywhere.  Child streams are derived by extending the spawn key
with small integers, never by consuming draws from the parent.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionMismatch


class RngStream:
    """Deterministic random stream: PCG64 seeded by (seed, derivation key)."""

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.key))
        )

    def derive(self, *key: int) -> "RngStream":
        """Independent child stream; derivation is by key, not by drawing."""
        return RngStream(self.seed, self.key + tuple(key))

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, scale: float, shape=None) -> np.ndarray:
        return self._gen.normal(0.0, scale, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key) into a single 63-bit integer seed, deterministically."""
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    words = state.generate_state(2, dtype=np.uint32)
    return (int(words[0]) << 31) ^ int(words[1])


def as_matrix(data) -> np.ndarray:
    """Coerce to a float64 2-D array."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit conformance checking."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"matmul: {a.shape} @ {b.shape}")
    c = a @ b
    assert np.isfinite(c).all(), "matmul produced non-finite entries"
    return c


def leaky_relu(x: np.ndarray, alpha: float) -> np.ndarray:
    """Elementwise x if x >= 0 else alpha*x."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, alpha * x)


def leaky_relu_grad(x: np.ndarray, alpha: float) -> np.ndarray:
    """Derivative of :func:`leaky_relu` w.r.t. its input; at exactly 0 it is 1."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, alpha)


def log_softmax(v: np.ndarray) -> np.ndarray:
    """Log of softmax along the last axis, computed stably via max subtraction.

    exp of the result sums to 1 within 1e-12 per row, and the output is
    invariant under adding a constant to every logit.
    """
    v = np.asarray(v, dtype=np.float64)
    shifted = v - v.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def xavier_uniform(fan_in: int, fan_out: int, rng: RngStream) -> np.ndarray:
    """Glorot-uniform init: i.i.d. U[-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise DimensionMismatch(f"xavier_uniform: fans must be >= 1, got ({fan_in}, {fan_out})")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], theta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one entry at a time.

    Slow by construction; this is the independent oracle every analytic
    gradient in the model is checked against.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f(theta)
        flat[i] = orig - eps
        f_minus = f(theta)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
