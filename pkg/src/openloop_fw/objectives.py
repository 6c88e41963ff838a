"""Smooth convex objectives: constrained regression and Huber matrix completion."""

import abc
from typing import Sequence

import numpy as np

from openloop_fw import exceptions
from openloop_fw.linalg import frobenius_inner
from openloop_fw.utils import as_matrix, as_vector


def huber(x, rho: float = 1.0):
    """``x^2 / 2`` for ``|x| <= 1`` and ``rho * (|x| - 1/2)`` otherwise.

    Only ``rho = 1`` makes the loss continuous (and C^1) at ``|x| = 1``.
    """
    if not rho > 0:
        raise exceptions.InvalidParameter(detail="rho must be positive.", rho=rho)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax <= 1.0, 0.5 * x * x, rho * (ax - 0.5))
    return float(out) if out.ndim == 0 else out


def huber_derivative(x, rho: float = 1.0):
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= 1.0, x, rho * np.sign(x))
    return float(out) if out.ndim == 0 else out


class Objective(abc.ABC):
    """A differentiable convex function on vectors or matrices of a fixed shape."""

    shape: tuple[int, ...]

    @abc.abstractmethod
    def value(self, x) -> float: ...

    @abc.abstractmethod
    def gradient(self, x) -> np.ndarray: ...

    @abc.abstractmethod
    def describe(self) -> str: ...

    def bregman(self, y, x) -> float:
        """``D_f(y, x) = f(y) - f(x) - <grad f(x), y - x>``."""
        y = self._check(y)
        x = self._check(x)
        return self.value(y) - self.value(x) - frobenius_inner(self.gradient(x), y - x)

    def excess(self, x, anchor) -> float:
        """``f(x) - f(anchor)``. Subclasses evaluate it without cancellation."""
        return self.value(x) - self.value(anchor)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise exceptions.DimensionMismatch(expected=self.shape, got=x.shape)
        return x


class QuadraticObjective(Objective):
    """``1/2 x^T H x + b^T x + c`` with symmetric positive semidefinite ``H``.

    Only meant for tests and hand-checked examples.
    """

    def __init__(self, hessian, linear=None, constant: float = 0.0):
        self.hessian = as_matrix(hessian, "hessian")
        n = self.hessian.shape[0]
        if self.hessian.shape != (n, n):
            raise exceptions.DimensionMismatch(detail="The Hessian must be square.", shape=self.hessian.shape)
        self.linear = np.zeros(n) if linear is None else as_vector(linear, "linear")
        if self.linear.shape != (n,):
            raise exceptions.DimensionMismatch(expected=(n,), got=self.linear.shape)
        self.constant = float(constant)
        self.shape = (n,)

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * x @ self.hessian @ x + self.linear @ x + self.constant)

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        return self.hessian @ x + self.linear

    def bregman(self, y, x) -> float:
        d = self._check(y) - self._check(x)
        return float(0.5 * d @ self.hessian @ d)

    def excess(self, x, anchor) -> float:
        d = self._check(x) - self._check(anchor)
        return float(self.gradient(anchor) @ d + 0.5 * d @ self.hessian @ d)

    def describe(self) -> str:
        return f"quadratic(n={self.shape[0]})"


class RegressionObjective(Objective):
    """``f(x) = 1/2 ||Ax - y||_2^2``.

    ``A^T A`` and ``A^T y`` are cached so that a gradient costs O(n^2).
    """

    def __init__(self, A, y):
        self.A = as_matrix(A, "A")
        self.y = as_vector(y, "y")
        if self.A.shape[0] != self.y.shape[0]:
            raise exceptions.DimensionMismatch(detail="rows(A) must equal dim(y).", rows=self.A.shape[0], dim=self.y.shape[0])
        self.gram = self.A.T @ self.A
        self.Aty = self.A.T @ self.y
        self.shape = (self.A.shape[1],)

    @property
    def is_identity(self) -> bool:
        m, n = self.A.shape
        return m == n and np.array_equal(self.A, np.eye(n))

    def value(self, x) -> float:
        residual = self.A @ self._check(x) - self.y
        return float(0.5 * residual @ residual)

    def gradient(self, x) -> np.ndarray:
        return self.gram @ self._check(x) - self.Aty

    def bregman(self, y, x) -> float:
        # Exact for a quadratic: D_f(y, x) = 1/2 ||A (y - x)||^2.
        Ad = self.A @ (self._check(y) - self._check(x))
        return float(0.5 * Ad @ Ad)

    def excess(self, x, anchor) -> float:
        d = self._check(x) - self._check(anchor)
        Ad = self.A @ d
        return float(self.gradient(anchor) @ d + 0.5 * Ad @ Ad)

    def describe(self) -> str:
        m, n = self.A.shape
        return f"regression(m={m},n={n})"


class CompletionObjective(Objective):
    """Mean Huber loss over the observed entries of a partially known matrix."""

    def __init__(self, row_index, col_index, values, shape: tuple[int, int], rho: float = 1.0):
        self.row_index = np.asarray(row_index, dtype=np.intp)
        self.col_index = np.asarray(col_index, dtype=np.intp)
        self.values = as_vector(values, "values")
        rows, cols = shape
        if not self.values.size:
            raise exceptions.InvalidParameter(detail="At least one observed entry is required.")
        if not (self.row_index.shape == self.col_index.shape == self.values.shape):
            raise exceptions.DimensionMismatch(detail="Index and value arrays must have equal length.")
        if self.row_index.min() < 0 or self.row_index.max() >= rows or self.col_index.min() < 0 or self.col_index.max() >= cols:
            raise exceptions.InvalidParameter(detail="Observed indices fall outside the matrix shape.", shape=shape)
        if not rho > 0:
            raise exceptions.InvalidParameter(detail="rho must be positive.", rho=rho)
        self.rho = float(rho)
        self.shape = (int(rows), int(cols))

    @classmethod
    def from_triples(cls, triples: Sequence[tuple[int, int, float]], rows: int, cols: int, rho: float = 1.0):
        if not len(triples):
            raise exceptions.InvalidParameter(detail="At least one observed entry is required.")
        i, j, a = zip(*triples)
        return cls(i, j, a, (rows, cols), rho=rho)

    @property
    def n_observed(self) -> int:
        return int(self.values.size)

    def residuals(self, X) -> np.ndarray:
        X = self._check(X)
        return self.values - X[self.row_index, self.col_index]

    def value(self, X) -> float:
        return float(np.mean(huber(self.residuals(X), self.rho)))

    def gradient(self, X) -> np.ndarray:
        weights = -huber_derivative(self.residuals(X), self.rho) / self.n_observed
        G = np.zeros(self.shape)
        np.add.at(G, (self.row_index, self.col_index), weights)
        return G

    def bregman(self, Y, X) -> float:
        # Only observed entries contribute, so the definition is summed there directly.
        rx = self.residuals(X)
        ry = self.residuals(Y)
        terms = huber(ry, self.rho) - huber(rx, self.rho) + huber_derivative(rx, self.rho) * (rx - ry)
        return float(np.sum(terms) / self.n_observed)

    def excess(self, X, anchor) -> float:
        diff = huber(self.residuals(X), self.rho) - huber(self.residuals(anchor), self.rho)
        return float(np.sum(diff) / self.n_observed)

    def describe(self) -> str:
        rows, cols = self.shape
        return f"completion(rows={rows},cols={cols},observed={self.n_observed},rho={self.rho:g})"


def value(obj: Objective, x) -> float:
    return obj.value(x)


def gradient(obj: Objective, x) -> np.ndarray:
    return obj.gradient(x)


def bregman(obj: Objective, y_pt, x) -> float:
    return obj.bregman(y_pt, x)
