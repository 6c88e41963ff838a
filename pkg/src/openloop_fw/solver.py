"""The Frank-Wolfe loop with open-loop step-sizes and full instrumentation.

Every iteration records the Frank-Wolfe gap, the best primal-dual gap and,
when a reference optimum is known, the primal suboptimality. The objective
reduction identity ``f(x') = f(x) - eta * gap + D_f(x', x)`` is checked at
each step; a large residual means gradient and value disagree.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from openloop_fw import exceptions
from openloop_fw.domains import FeasibleRegion, LpBall
from openloop_fw.linalg import frobenius_inner, lq_norm
from openloop_fw.objectives import Objective, RegressionObjective
from openloop_fw.schedules import Schedule
from openloop_fw.settings import app_settings
from openloop_fw.utils import spawn_rng

logger = logging.getLogger(__name__)

#: Child stream of an experiment seed used for start vertices.
START_STREAM = 0

CSV_COLUMNS = ("t", "eta", "f", "gap", "dual", "primaldual", "subopt", "bregman", "identity_residual")
CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class IterateState:
    t: int
    x: np.ndarray
    f_x: float
    grad: np.ndarray


@dataclass(frozen=True)
class IterationRecord:
    t: int
    eta: float
    f_x: float
    gap: float
    dual_value: float
    bregman_step: float
    identity_residual: float
    lmo_tie: bool = False
    primaldual: Optional[float] = None
    subopt_vs_ref: Optional[float] = None


@dataclass(frozen=True)
class Trace:
    records: tuple[IterationRecord, ...]
    best_dual: np.ndarray
    schedule: str
    region: str
    objective: str
    seed: Optional[int] = None
    f_star: Optional[float] = None
    best_x: Optional[np.ndarray] = field(default=None, repr=False)
    final_x: Optional[np.ndarray] = field(default=None, repr=False)
    iterates: Optional[tuple[np.ndarray, ...]] = field(default=None, repr=False)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        values = [getattr(record, name) for record in self.records]
        return np.array([np.nan if value is None else value for value in values], dtype=float)

    def measure(self, name: str) -> np.ndarray:
        """One of ``gap``, ``primaldual`` or ``subopt`` as an array indexed by t."""
        attribute = {"gap": "gap", "primaldual": "primaldual", "subopt": "subopt_vs_ref"}.get(name)
        if attribute is None:
            raise exceptions.InvalidParameter(detail=f"Unknown measure {name!r}.", measure=name)
        return self.column(attribute)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "t": np.array([record.t for record in self.records], dtype=np.int64),
                "eta": self.column("eta"),
                "f": self.column("f_x"),
                "gap": self.column("gap"),
                "dual": self.column("dual_value"),
                "primaldual": self.column("primaldual"),
                "subopt": self.column("subopt_vs_ref"),
                "bregman": self.column("bregman_step"),
                "identity_residual": self.column("identity_residual"),
            }
        )
        return frame[list(CSV_COLUMNS)]

    def to_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        return path


def initial_state(obj: Objective, region: FeasibleRegion, x0=None) -> IterateState:
    """Start at ``x0``, or by default at the LMO vertex for the gradient at the region's center."""
    if x0 is None:
        x0 = region.lmo(obj.gradient(region.center())).dense
    x0 = np.array(x0, dtype=float)
    if x0.shape != region.shape:
        raise exceptions.DimensionMismatch(expected=region.shape, got=x0.shape)
    if not region.contains(x0, app_settings.FW_MEMBERSHIP_TOL):
        raise exceptions.InvalidParameter(detail="x0 must lie in the feasible region.")
    return IterateState(t=0, x=x0, f_x=obj.value(x0), grad=obj.gradient(x0))


def start_vertex(region: FeasibleRegion, seed: int) -> np.ndarray:
    """The LMO vertex for a seeded standard normal direction.

    Used by experiments, since the default start coincides with the optimum
    whenever the minimizer is the vertex aligned with ``-grad f(0)``. The
    direction is drawn from its own child stream of ``seed``, so it is
    independent of a synthetic instance generated from the same seed.
    """
    direction = spawn_rng(seed, START_STREAM).standard_normal(region.shape)
    return region.lmo(direction).dense


def fw_step(
    state: IterateState, schedule: Schedule, region: FeasibleRegion, obj: Objective
) -> tuple[IterateState, IterationRecord]:
    """One iteration ``x' = x + eta_t (v - x)`` with ``v`` the LMO vertex at ``grad f(x)``."""
    lmo = region.lmo(state.grad)
    v = lmo.dense
    direction = v - state.x
    gap = -frobenius_inner(state.grad, direction)
    eta = schedule.eta(state.t)

    x_next = state.x + eta * direction
    f_next = obj.value(x_next)
    bregman_step = obj.bregman(x_next, state.x)

    residual = f_next - (state.f_x - eta * gap + bregman_step)
    scale = max(abs(state.f_x), abs(f_next), abs(eta * gap), abs(bregman_step))
    relative = abs(residual) / scale if scale > 0 else 0.0
    if relative > app_settings.FW_IDENTITY_FAIL_TOL:
        raise exceptions.NumericalInconsistency(
            detail="The objective reduction identity failed; value and gradient disagree.",
            t=state.t,
            residual=relative,
        )
    if relative > app_settings.FW_IDENTITY_WARN_TOL:
        logger.warning("Objective reduction identity residual %.3e at t=%d", relative, state.t)

    if not region.contains(x_next, app_settings.FW_MEMBERSHIP_TOL):
        raise exceptions.NumericalInconsistency(detail="An iterate left the feasible region.", t=state.t + 1)

    record = IterationRecord(
        t=state.t,
        eta=eta,
        f_x=state.f_x,
        gap=gap,
        dual_value=state.f_x - gap,
        bregman_step=bregman_step,
        identity_residual=relative,
        lmo_tie=lmo.tie,
    )
    next_state = IterateState(t=state.t + 1, x=x_next, f_x=f_next, grad=obj.gradient(x_next))
    return next_state, record


def fw_run(
    obj: Objective,
    region: FeasibleRegion,
    schedule: Schedule,
    T: int,
    x0=None,
    f_star: Optional[float] = None,
    x_star=None,
    gap_tol: Optional[float] = None,
    keep_iterates: bool = False,
    seed: Optional[int] = None,
) -> Trace:
    """Run ``T`` Frank-Wolfe iterations and return the instrumented trace.

    With ``x_star`` (a known minimizer) the suboptimality and primal-dual gap
    are evaluated as ``f(x) - f(x_star)`` through ``obj.excess``, which stays
    accurate far below the rounding level of ``f`` itself. With only
    ``f_star`` they are plain differences of objective values.
    """
    if T < 1:
        raise exceptions.InvalidParameter(detail="T must be at least 1.", T=T)
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        if f_star is None:
            f_star = obj.value(x_star)

    logger.info("Frank-Wolfe: %s over %s with %s for %d iterations", obj.describe(), region.spec, schedule, T)
    state = initial_state(obj, region, x0)
    records = []
    best_duals = np.empty(T)
    best_shifted = -np.inf
    best_x, best_f = state.x, np.inf
    iterates = [] if keep_iterates else None

    for t in range(T):
        if x_star is not None:
            shifted = obj.excess(state.x, x_star)
        else:
            shifted = state.f_x
        if state.f_x < best_f:
            best_x, best_f = state.x, state.f_x
        if keep_iterates:
            iterates.append(state.x)

        state, record = fw_step(state, schedule, region, obj)

        best_shifted = max(best_shifted, shifted - record.gap)
        if x_star is not None:
            subopt = shifted
            best_duals[t] = f_star + best_shifted
        else:
            subopt = record.f_x - f_star if f_star is not None else None
            best_duals[t] = best_shifted
        records.append(replace(record, primaldual=shifted - best_shifted, subopt_vs_ref=subopt))

        if gap_tol is not None and record.gap <= gap_tol:
            logger.info("Gap %.3e below threshold at t=%d; stopping early", record.gap, t)
            best_duals = best_duals[: t + 1]
            break

    return Trace(
        records=tuple(records),
        best_dual=best_duals,
        schedule=schedule.description,
        region=region.spec,
        objective=obj.describe(),
        seed=seed,
        f_star=f_star,
        best_x=best_x,
        final_x=state.x,
        iterates=tuple(iterates) if keep_iterates else None,
    )


@dataclass(frozen=True)
class ReferenceOptimum:
    f_star_estimate: float
    certified_lower: float
    point: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.f_star_estimate, self.certified_lower))


def reference_optimum(obj: Objective, region: FeasibleRegion, budget: Optional[int] = None) -> ReferenceOptimum:
    """Bracket ``f*`` with a long log-adaptive run.

    The estimate is the best objective value seen and the certified lower
    bound the best dual value ``f(x_k) - gap_k``, so
    ``certified_lower <= f* <= f_star_estimate``.
    """
    budget = app_settings.FW_REFERENCE_BUDGET if budget is None else budget
    if budget < 1000:
        raise exceptions.InvalidParameter(detail="The reference budget must be at least 1000.", budget=budget)
    trace = fw_run(obj, region, Schedule.log_adaptive(), budget)
    f_values = trace.column("f_x")
    best = int(np.argmin(f_values))
    estimate = float(f_values[best])
    lower = float(trace.best_dual[-1])
    if lower > estimate:
        # f(x) - gap rounds above f(x) once the gap is below the spacing of f.
        logger.debug("Clamping dual bound %.17g to the primal estimate %.17g", lower, estimate)
        lower = estimate
    result = ReferenceOptimum(
        f_star_estimate=estimate,
        certified_lower=lower,
        point=trace.best_x,
    )
    logger.info("Reference optimum bracket [%.17g, %.17g]", result.certified_lower, result.f_star_estimate)
    return result


def project_lp_ball(y, p: float, beta: float) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``{x : ||x||_p <= beta}`` for ``1 < p < inf``.

    Outside the ball the minimizer satisfies ``s_i + mu * s_i^(p-1) = |y_i|``
    coordinate-wise with ``x_i = sign(y_i) s_i``; ``mu`` is found by root
    finding on ``sum s_i(mu)^p = beta^p``.
    """
    y = np.asarray(y, dtype=float)
    if lq_norm(y, p) <= beta:
        return y.copy()
    if p == 2:
        return beta * y / np.linalg.norm(y)

    magnitude = np.abs(y)

    def coordinates(mu: float) -> np.ndarray:
        s = np.zeros_like(magnitude)
        for i, a in enumerate(magnitude):
            if a > 0:
                s[i] = brentq(lambda z, a=a: z + mu * z ** (p - 1.0) - a, 0.0, a, xtol=1e-300)
        return s

    def excess_norm(mu: float) -> float:
        return float(np.sum(coordinates(mu) ** p)) - beta**p

    mu_hi = 1.0
    while excess_norm(mu_hi) > 0:
        mu_hi *= 2.0
    mu = brentq(excess_norm, 0.0, mu_hi, xtol=1e-300)
    x = np.sign(y) * coordinates(mu)
    return x * (beta / lq_norm(x, p))


def analytic_optimum(obj: Objective, region: FeasibleRegion) -> Optional[np.ndarray]:
    """Exact minimizer when one is available, else ``None``.

    Covered: identity-design regression over an lp-ball, where the minimizer
    is the projection of ``y`` onto the ball.
    """
    if isinstance(obj, RegressionObjective) and isinstance(region, LpBall) and obj.is_identity:
        return project_lp_ball(obj.y, region.p, region.beta)
    return None
