"""Compact convex feasible regions and their linear minimization oracles."""

import abc
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg

from openloop_fw import exceptions
from openloop_fw.linalg import SingularTriplet, dual_exponent, lq_norm, nuclear_norm, top_singular_triplet
from openloop_fw.settings import app_settings
from openloop_fw.utils import as_matrix, as_vector

logger = logging.getLogger(__name__)

#: Entries of a linear functional below this magnitude are treated as exact zeros.
ZERO_ENTRY = 1e-300


@dataclass(frozen=True)
class RankOneVertex:
    """The matrix ``scale * outer(left, right)``, kept factored."""

    scale: float
    left: np.ndarray
    right: np.ndarray

    def dense(self) -> np.ndarray:
        return self.scale * np.outer(self.left, self.right)

    def inner(self, G: np.ndarray) -> float:
        return float(self.scale * (self.left @ G @ self.right))


@dataclass(frozen=True)
class LmoResult:
    vertex: Union[np.ndarray, RankOneVertex]
    inner_product: float
    tie: bool = False

    @property
    def dense(self) -> np.ndarray:
        if isinstance(self.vertex, RankOneVertex):
            return self.vertex.dense()
        return self.vertex


class FeasibleRegion(abc.ABC):
    """A norm ball ``{x : ||x|| <= beta}``."""

    beta: float

    @property
    @abc.abstractmethod
    def shape(self) -> tuple[int, ...]: ...

    @property
    @abc.abstractmethod
    def spec(self) -> str: ...

    @abc.abstractmethod
    def norm(self, x) -> float: ...

    @abc.abstractmethod
    def lmo(self, c) -> LmoResult: ...

    def center(self) -> np.ndarray:
        return np.zeros(self.shape)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise exceptions.DimensionMismatch(expected=self.shape, got=x.shape)
        return self.norm(x) <= self.beta * (1.0 + tol)


@dataclass(frozen=True)
class LpBall(FeasibleRegion):
    p: float
    beta: float
    dim: int

    def __post_init__(self):
        if not 1 < self.p < np.inf:
            raise exceptions.InvalidParameter(detail="The lp-ball oracle needs 1 < p < inf.", p=self.p)
        if not self.beta > 0:
            raise exceptions.InvalidParameter(detail="The radius beta must be positive.", beta=self.beta)
        if self.dim < 1:
            raise exceptions.InvalidParameter(detail="dim must be at least 1.", dim=self.dim)

    @property
    def shape(self):
        return (self.dim,)

    @property
    def spec(self) -> str:
        return f"lp:{self.p:g}:{self.beta:.17g}"

    @property
    def q(self) -> float:
        return dual_exponent(self.p)

    def norm(self, x) -> float:
        return lq_norm(x, self.p)

    def lmo(self, c) -> LmoResult:
        return lmo_lp_ball(c, self)


@dataclass(frozen=True)
class NuclearBall(FeasibleRegion):
    beta: float
    rows: int
    cols: int

    def __post_init__(self):
        if not self.beta > 0:
            raise exceptions.InvalidParameter(detail="The radius beta must be positive.", beta=self.beta)
        if self.rows < 1 or self.cols < 1:
            raise exceptions.InvalidParameter(detail="The matrix shape must be positive.", rows=self.rows, cols=self.cols)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def spec(self) -> str:
        return f"nuc:{self.beta:.17g}"

    def norm(self, x) -> float:
        return nuclear_norm(x)

    def lmo(self, c, tol: Optional[float] = None) -> LmoResult:
        return lmo_nuclear_ball(c, self, tol=tol)


def lmo_lp_ball(c, region: LpBall) -> LmoResult:
    """Closed-form minimizer of ``<c, v>`` over ``||v||_p <= beta``.

    ``v_i = -beta * sign(c_i) * |c_i|^(q-1) / ||c||_q^(q-1)`` with ``1/p + 1/q = 1``.
    For ``c = 0`` every point is a minimizer; the vertex ``-beta * e_1`` is
    returned and the result is flagged as a tie.
    """
    c = as_vector(c, "c")
    if c.shape != region.shape:
        raise exceptions.DimensionMismatch(expected=region.shape, got=c.shape)

    magnitude = np.abs(c)
    magnitude[magnitude < ZERO_ENTRY] = 0.0
    largest = magnitude.max()
    if largest == 0.0:
        vertex = np.zeros(region.dim)
        vertex[0] = -region.beta
        return LmoResult(vertex=vertex, inner_product=float(c @ vertex), tie=True)

    q = region.q
    scaled = magnitude / largest
    weights = scaled ** (q - 1.0)
    vertex = -region.beta * np.sign(c) * weights / lq_norm(scaled, q) ** (q - 1.0)
    return LmoResult(vertex=vertex, inner_product=float(c @ vertex))


def _dense_top_triplet(G: np.ndarray) -> SingularTriplet:
    U, s, Vt = scipy.linalg.svd(G, full_matrices=False)
    return SingularTriplet(sigma=float(s[0]), left=U[:, 0], right=Vt[0])


def lmo_nuclear_ball(G, region: NuclearBall, tol: Optional[float] = None) -> LmoResult:
    """Minimizer ``-beta * u1 v1^T`` of ``<G, V>`` over the nuclear-norm ball.

    The vertex is returned as a ``RankOneVertex``; for ``G = 0`` the tie vertex
    ``-beta * e_1 e_1^T`` is used. A stalled power iteration falls back to a
    dense SVD.
    """
    G = as_matrix(G, "G")
    if G.shape != region.shape:
        raise exceptions.DimensionMismatch(expected=region.shape, got=G.shape)
    tol = app_settings.FW_LMO_TOL if tol is None else tol
    if not tol > 0:
        raise exceptions.InvalidParameter(detail="tol must be positive.", tol=tol)

    try:
        triplet = top_singular_triplet(G, tol=tol)
    except exceptions.ConvergenceFailure as exc:
        logger.warning("Power iteration stalled (%s); using a dense SVD instead", exc)
        triplet = _dense_top_triplet(G)
    except exceptions.ZeroMatrix:
        left = np.zeros(region.rows)
        right = np.zeros(region.cols)
        left[0] = right[0] = 1.0
        vertex = RankOneVertex(scale=-region.beta, left=left, right=right)
        return LmoResult(vertex=vertex, inner_product=vertex.inner(G), tie=True)

    vertex = RankOneVertex(scale=-region.beta, left=triplet.left, right=triplet.right)
    return LmoResult(vertex=vertex, inner_product=vertex.inner(G))


def membership(region: FeasibleRegion, x, tol: float = 1e-9) -> bool:
    return region.contains(x, tol)


def parse_region(spec: str, shape: tuple[int, ...]) -> FeasibleRegion:
    """Build a region from ``lp:<p>:<beta>`` or ``nuc:<beta>`` for iterates of ``shape``."""
    parts = spec.strip().lower().split(":")
    try:
        if parts[0] == "lp" and len(parts) == 3:
            if len(shape) != 1:
                raise exceptions.DimensionMismatch(detail="lp-balls live in vector space.", shape=shape)
            return LpBall(p=float(parts[1]), beta=float(parts[2]), dim=shape[0])
        if parts[0] == "nuc" and len(parts) == 2:
            if len(shape) != 2:
                raise exceptions.DimensionMismatch(detail="Nuclear balls live in matrix space.", shape=shape)
            return NuclearBall(beta=float(parts[1]), rows=shape[0], cols=shape[1])
    except ValueError:
        raise exceptions.InvalidParameter(detail=f"Cannot read numbers from region spec {spec!r}.")
    raise exceptions.InvalidParameter(detail=f"Unknown region spec {spec!r}. Use lp:<p>:<beta> or nuc:<beta>.")
