"""Dense linear algebra used by the oracles and objectives.

Vectors and matrices are plain float64 ``numpy.ndarray`` objects; the
functions here never mutate their inputs.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from openloop_fw import exceptions
from openloop_fw.settings import app_settings
from openloop_fw.utils import as_matrix, as_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SingularTriplet:
    """Top singular value of a matrix with its unit left/right singular vectors."""

    sigma: float
    left: np.ndarray
    right: np.ndarray


def lq_norm(x, q: float) -> float:
    """Return ``(sum |x_i|^q)^(1/q)``, or ``max |x_i|`` for ``q = inf``."""
    if not q >= 1:
        raise exceptions.InvalidParameter(detail="The norm exponent q must be at least 1.", q=q)
    x = np.abs(np.asarray(x, dtype=float)).ravel()
    if x.size == 0:
        return 0.0
    largest = float(np.max(x))
    if np.isinf(q):
        return largest
    if largest == 0.0:
        return 0.0
    # Scaling by the largest entry keeps |x_i|^q away from overflow and underflow.
    scaled = x / largest
    return largest * float(np.sum(scaled**q) ** (1.0 / q))


def dual_exponent(p: float) -> float:
    """Hoelder conjugate ``q`` with ``1/p + 1/q = 1``."""
    if np.isinf(p):
        return 1.0
    if p == 1:
        return np.inf
    return p / (p - 1.0)


def least_squares(A, y, rank_tol: Optional[float] = None) -> np.ndarray:
    """Solve ``argmin ||Ax - y||_2`` through a column-pivoted QR factorization.

    Raises ``RankDeficiency`` (carrying the estimated rank) when a pivot of R
    falls below ``rank_tol`` times the largest pivot.
    """
    A = as_matrix(A, "A")
    y = as_vector(y, "y")
    m, n = A.shape
    if m != y.shape[0]:
        raise exceptions.DimensionMismatch(detail="rows(A) must equal dim(y).", rows=m, dim=y.shape[0])
    if rank_tol is None:
        rank_tol = app_settings.FW_RANK_TOL

    Q, R, perm = scipy.linalg.qr(A, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(R))
    largest = pivots[0] if pivots.size else 0.0
    rank = int(np.sum(pivots > rank_tol * largest)) if largest > 0 else 0
    if rank < n:
        raise exceptions.RankDeficiency(rank=rank, columns=n)

    solution = scipy.linalg.solve_triangular(R, Q.T @ y)
    x = np.empty(n)
    x[perm] = solution
    return x


def top_singular_triplet(
    G,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: Optional[int] = None,
    start: Optional[np.ndarray] = None,
) -> SingularTriplet:
    """Leading singular triplet of ``G`` by power iteration on ``G^T G``.

    The start vector is the normalized all-ones vector with a small seeded
    perturbation mixed in, so a start exactly orthogonal to the leading right
    singular vector has probability zero while the result stays reproducible.
    Iteration stops once ``||G^T u - sigma v|| <= tol * sigma``; the companion
    residual ``||G v - sigma u||`` is zero by construction.
    """
    G = as_matrix(G, "G")
    tol = app_settings.FW_POWER_TOL if tol is None else tol
    max_iter = app_settings.FW_POWER_MAX_ITER if max_iter is None else max_iter
    seed = app_settings.FW_POWER_SEED if seed is None else seed
    if not tol > 0:
        raise exceptions.InvalidParameter(detail="tol must be positive.", tol=tol)
    if max_iter < 1:
        raise exceptions.InvalidParameter(detail="max_iter must be at least 1.", max_iter=max_iter)

    scale = float(np.max(np.abs(G))) if G.size else 0.0
    if scale < 1e-300:
        raise exceptions.ZeroMatrix()
    Gs = G / scale
    n = Gs.shape[1]
    rng = np.random.default_rng(seed)

    if start is None:
        v = np.ones(n) / np.sqrt(n) + 1e-2 * rng.standard_normal(n) / np.sqrt(n)
    else:
        v = as_vector(start, "start")
    v = v / np.linalg.norm(v)

    residual = np.inf
    for iteration in range(max_iter):
        w = Gs @ v
        s = np.linalg.norm(w)
        if s == 0.0:
            # Start vector in the null space of G; restart from a random direction.
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        u = w / s
        z = Gs.T @ u
        residual = np.linalg.norm(z - s * v) / s
        if residual <= tol:
            logger.debug("Power iteration converged after %d steps (residual %.3e)", iteration + 1, residual)
            return SingularTriplet(sigma=scale * s, left=u, right=v)
        v = z / np.linalg.norm(z)

    raise exceptions.ConvergenceFailure(residual=float(residual), max_iter=max_iter)


def nuclear_norm(X) -> float:
    """Sum of singular values. Used for membership tests at desk scale only."""
    X = as_matrix(X, "X")
    return float(np.sum(scipy.linalg.svdvals(X)))


def frobenius_inner(X, Y) -> float:
    return float(np.sum(np.asarray(X) * np.asarray(Y)))
