"""Dense float64 primitives shared by every other module.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64
(2-D and 1-D respectively); nothing here wraps them in custom containers.
"""
from __future__ import annotations

import math

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh", "relu")


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class SeededRng:
    """Single-owner reproducible random stream (PCG64 underneath)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)


def matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: matrix {A.shape} incompatible with vector {x.shape}")
    return A @ x


def sigmoid(x):
    """Logistic function, overflow-free for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(kind: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def softmax(z) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def init_matrix(rows: int, cols: int, scheme, rng: SeededRng | None = None) -> np.ndarray:
    """Allocate a ``rows x cols`` matrix.

    ``scheme`` is ``"uniform_scaled"`` (Glorot-style uniform in
    ``[-s, s]``, ``s = sqrt(6 / (rows + cols))``) or ``("constant", v)``.
    """
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"init_matrix: dimensions must be positive, got {rows}x{cols}")
    if scheme == "uniform_scaled":
        if rng is None:
            raise ValueError("uniform_scaled initialisation needs an rng")
        s = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=(rows, cols))
    if isinstance(scheme, tuple) and len(scheme) == 2 and scheme[0] == "constant":
        return np.full((rows, cols), float(scheme[1]))
    raise ValueError(f"unknown init scheme {scheme!r}")
