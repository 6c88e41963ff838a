"""Growth certification, rate envelopes and empirical rate estimation.

A growth certificate is a sampled estimate of the constant ``M`` in

* strong (M, r)-growth: ``D_f(x + eta (v - x), x) <= M eta^2 / 2 * gap(x)^r``
* weak (M, r)-growth: ``D_f(x + eta (v - x), x) * subopt(x)^(1 - r) <= M eta^2 / 2 * gap(x)``

where ``v`` is the LMO vertex at ``grad f(x)``. The envelopes evaluate the
convergence bounds these properties imply for open-loop step-sizes, so a
measured trace can be checked against them pointwise.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from openloop_fw import exceptions
from openloop_fw.domains import FeasibleRegion
from openloop_fw.linalg import frobenius_inner
from openloop_fw.objectives import Objective
from openloop_fw.schedules import Schedule
from openloop_fw.settings import app_settings
from openloop_fw.solver import START_STREAM, Trace, fw_run
from openloop_fw.utils import spawn_rng

logger = logging.getLogger(__name__)

STRONG = "strong"
WEAK = "weak"

#: Samples whose Frank-Wolfe gap falls below this are stationary and skipped.
STATIONARY_GAP = 1e-12

#: Relative slack granted to a measured value before it counts as above its bound.
BOUND_SLACK = 1e-6

MIN_SLOPE_SAMPLES = 20

VIOLATION_COLUMNS = ("t", "measured", "bound")

#: Child stream of the seed used for growth samples, distinct from start vertices.
SAMPLING_STREAM = START_STREAM + 1


@dataclass(frozen=True)
class GrowthCertificate:
    mode: str
    r: float
    M_hat: float
    samples: int
    eta_grid: int
    violations_at_M_hat: int
    max_ratio_location: tuple[int, float]
    stationary_skipped: int = 0
    seed: Optional[int] = None

    def as_row(self) -> dict:
        point, eta = self.max_ratio_location
        return {
            "mode": self.mode,
            "r": self.r,
            "M_hat": self.M_hat,
            "samples": self.samples,
            "eta_grid": self.eta_grid,
            "violations_at_M_hat": self.violations_at_M_hat,
            "max_ratio_point": point,
            "max_ratio_eta": eta,
            "stationary_skipped": self.stationary_skipped,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RevalidationReport:
    evaluated: int
    violations: int
    margin: float

    @property
    def rate(self) -> float:
        return self.violations / self.evaluated if self.evaluated else 0.0


def eta_grid(n_eta: Optional[int] = None) -> np.ndarray:
    """Logarithmically spaced step-sizes in ``[FW_ETA_GRID_MIN, 1]``."""
    n_eta = app_settings.FW_ETA_GRID_SIZE if n_eta is None else n_eta
    return np.geomspace(app_settings.FW_ETA_GRID_MIN, 1.0, n_eta)


def _check_mode(mode: str, r: float):
    if mode not in (STRONG, WEAK):
        raise exceptions.InvalidParameter(detail=f"Unknown growth mode {mode!r}. Use strong or weak.", mode=mode)
    if not 0.0 <= r <= 1.0:
        raise exceptions.InvalidParameter(detail="r must lie in [0, 1].", r=r)


def _random_combinations(region: FeasibleRegion, count: int, rng: np.random.Generator) -> list:
    points = []
    for _ in range(count):
        k = int(rng.integers(2, 6))
        vertices = [region.lmo(rng.standard_normal(region.shape)).dense for _ in range(k)]
        weights = rng.dirichlet(np.ones(k))
        points.append(sum(w * v for w, v in zip(weights, vertices)))
    return points


def _sample_points(
    obj: Objective,
    region: FeasibleRegion,
    n_samples: int,
    rng: np.random.Generator,
    trajectory: Optional[Sequence[np.ndarray]],
    schedule: Optional[Schedule],
) -> list:
    n_random = n_samples // 2
    n_trajectory = n_samples - n_random
    if trajectory is None:
        schedule = schedule or Schedule.log_adaptive()
        x0 = region.lmo(rng.standard_normal(region.shape)).dense
        trajectory = fw_run(obj, region, schedule, n_trajectory, x0=x0, keep_iterates=True).iterates
    trajectory = list(trajectory)
    if len(trajectory) > n_trajectory:
        picked = np.sort(rng.choice(len(trajectory), size=n_trajectory, replace=False))
        trajectory = [trajectory[i] for i in picked]
    return _random_combinations(region, n_random, rng) + trajectory


def _subopt_source(obj: Objective, f_star: Optional[float], x_star):
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        return lambda x: obj.excess(x, x_star)
    if f_star is not None:
        return lambda x: obj.value(x) - f_star
    raise exceptions.InvalidParameter(detail="Weak growth needs f* (f_star or x_star).")


def growth_ratios(
    obj: Objective,
    region: FeasibleRegion,
    points: Sequence[np.ndarray],
    mode: str,
    r: float,
    etas: np.ndarray,
    f_star: Optional[float] = None,
    x_star=None,
) -> np.ndarray:
    """Smallest admissible ``M`` per (point, eta); rows of stationary points are NaN."""
    _check_mode(mode, r)
    subopt = _subopt_source(obj, f_star, x_star) if mode == WEAK else None
    ratios = np.full((len(points), etas.size), np.nan)
    for i, x in enumerate(points):
        grad = obj.gradient(x)
        direction = region.lmo(grad).dense - x
        gap = -frobenius_inner(grad, direction)
        if gap < STATIONARY_GAP:
            continue
        if mode == STRONG:
            weight = 1.0 / gap**r
        else:
            weight = max(subopt(x), 0.0) ** (1.0 - r) / gap
        for j, eta in enumerate(etas):
            divergence = max(obj.bregman(x + eta * direction, x), 0.0)
            ratios[i, j] = 2.0 * divergence * weight / (eta * eta)
    return ratios


def certify_growth(
    obj: Objective,
    region: FeasibleRegion,
    mode: str,
    r: float,
    n_samples: int = 200,
    n_eta: Optional[int] = None,
    seed: int = 0,
    f_star: Optional[float] = None,
    x_star=None,
    trajectory: Optional[Sequence[np.ndarray]] = None,
    schedule: Optional[Schedule] = None,
) -> GrowthCertificate:
    """Estimate ``M`` as the largest growth ratio over sampled points and step-sizes.

    Half of the points are random convex combinations of two to five LMO
    vertices, the other half come from a Frank-Wolfe trajectory: either the
    ``trajectory`` passed in or a fresh run with ``schedule``.
    """
    _check_mode(mode, r)
    n_eta = app_settings.FW_ETA_GRID_SIZE if n_eta is None else n_eta
    if n_samples < 10:
        raise exceptions.InvalidParameter(detail="n_samples must be at least 10.", n_samples=n_samples)
    if n_eta < 10:
        raise exceptions.InvalidParameter(detail="n_eta must be at least 10.", n_eta=n_eta)
    if mode == WEAK:
        _subopt_source(obj, f_star, x_star)

    rng = spawn_rng(seed, SAMPLING_STREAM)
    etas = eta_grid(n_eta)
    points = _sample_points(obj, region, n_samples, rng, trajectory, schedule)
    ratios = growth_ratios(obj, region, points, mode, r, etas, f_star=f_star, x_star=x_star)

    evaluated = ~np.isnan(ratios[:, 0])
    if not evaluated.any():
        raise exceptions.DegenerateInstance(samples=len(points))
    flat = np.nanargmax(ratios)
    point, column = np.unravel_index(flat, ratios.shape)
    M_hat = float(ratios[point, column])
    if not M_hat > 0:
        # Zero curvature along every sampled direction; any positive M works.
        M_hat = float(np.finfo(float).tiny)

    certificate = GrowthCertificate(
        mode=mode,
        r=float(r),
        M_hat=M_hat,
        samples=int(evaluated.sum()),
        eta_grid=int(n_eta),
        violations_at_M_hat=int(np.sum(ratios[evaluated] > M_hat)),
        max_ratio_location=(int(point), float(etas[column])),
        stationary_skipped=int((~evaluated).sum()),
        seed=seed,
    )
    logger.info("Certified %s (M, %g)-growth with M_hat=%.6g over %d samples", mode, r, M_hat, certificate.samples)
    return certificate


def revalidate_certificate(
    certificate: GrowthCertificate,
    obj: Objective,
    region: FeasibleRegion,
    seed: int,
    margin: float = 1.05,
    n_samples: Optional[int] = None,
    f_star: Optional[float] = None,
    x_star=None,
    trajectory: Optional[Sequence[np.ndarray]] = None,
    schedule: Optional[Schedule] = None,
) -> RevalidationReport:
    """Re-evaluate the growth inequality with ``margin * M_hat`` on a fresh sample."""
    if not margin > 0:
        raise exceptions.InvalidParameter(detail="margin must be positive.", margin=margin)
    n_samples = certificate.samples + certificate.stationary_skipped if n_samples is None else n_samples
    rng = spawn_rng(seed, SAMPLING_STREAM)
    etas = eta_grid(certificate.eta_grid)
    points = _sample_points(obj, region, n_samples, rng, trajectory, schedule)
    ratios = growth_ratios(obj, region, points, certificate.mode, certificate.r, etas, f_star=f_star, x_star=x_star)
    finite = ratios[~np.isnan(ratios)]
    violations = int(np.sum(finite > margin * certificate.M_hat))
    return RevalidationReport(evaluated=int(finite.size), violations=violations, margin=margin)


def combine_certificates(strong: GrowthCertificate, weak: GrowthCertificate) -> float:
    """A single ``M`` valid for strong (M, 0)- and weak (M, r)-growth at once."""
    if strong.mode != STRONG or strong.r != 0.0:
        raise exceptions.InvalidParameter(detail="The first certificate must be strong with r = 0.")
    if weak.mode != WEAK:
        raise exceptions.InvalidParameter(detail="The second certificate must be weak.")
    return max(strong.M_hat, weak.M_hat)


def proxy_r(T: int) -> float:
    """Stand-in ``r = 1 - 1/log(T)`` for instances with (M, 1)-growth, where the envelopes diverge."""
    if T < 3:
        raise exceptions.InvalidParameter(detail="T must be at least 3.", T=T)
    return 1.0 - 1.0 / math.log(T)


@dataclass(frozen=True)
class RateEnvelope:
    schedule: Schedule
    S: int
    epsilon: float
    M: float
    r: float
    mode: str = STRONG

    def __post_init__(self):
        _check_mode(self.mode, self.r)
        if self.S < 1:
            raise exceptions.InvalidParameter(detail="S must be at least 1.", S=self.S)
        g_S = self.schedule.g(self.S)
        if not 0 < self.epsilon < g_S:
            raise exceptions.InvalidParameter(detail="epsilon must lie in ]0, g(S)[.", epsilon=self.epsilon, g_S=g_S)
        if not self.r < 1:
            raise exceptions.InvalidParameter(detail="The rate envelopes need r < 1.", r=self.r)
        if not self.M > 0:
            raise exceptions.InvalidParameter(detail="M must be positive.", M=self.M)

    @property
    def k(self) -> float:
        k = min(self.schedule.g(self.S) - self.epsilon, 1.0 / (1.0 - self.r))
        if self.mode == WEAK:
            k = min(k, 2.0)
        return k

    def values(self, value_S: float, t_values) -> np.ndarray:
        """The bound at every ``t`` in ``t_values`` given the measure at ``t = S``."""
        ts = np.asarray(t_values, dtype=np.int64)
        if ts.size and ts.min() < self.S:
            raise exceptions.InvalidParameter(detail="The envelope is defined for t >= S.", S=self.S)
        g_S = self.schedule.g(self.S)
        eta_prev = np.array([self.schedule.eta(int(t) - 1) for t in ts])
        g_prev = np.array([self.schedule.g(int(t) - 1) for t in ts])
        eta_base = self.schedule.eta(self.S - 1)

        decay = value_S * (eta_prev / eta_base) ** (g_S - self.epsilon)
        with np.errstate(over="ignore"):
            constant = (self.M * g_prev / (2.0 * self.epsilon)) ** (1.0 / (1.0 - self.r))
        if self.mode == WEAK:
            constant = constant + self.M / 2.0
        return np.maximum(decay, constant * eta_prev**self.k)


def strong_rate_bound(env: RateEnvelope, primaldual_S: float, t: int) -> float:
    """Upper bound on ``primaldual_t`` under strong (M, r)-growth."""
    if env.mode != STRONG:
        env = RateEnvelope(env.schedule, env.S, env.epsilon, env.M, env.r, STRONG)
    return float(env.values(primaldual_S, [t])[0])


def weak_rate_bound(env: RateEnvelope, subopt_S: float, t: int) -> float:
    """Upper bound on ``subopt_t`` under strong (M, 0)- and weak (M, r)-growth."""
    if env.mode != WEAK:
        env = RateEnvelope(env.schedule, env.S, env.epsilon, env.M, env.r, WEAK)
    return float(env.values(subopt_S, [t])[0])


@dataclass(frozen=True)
class BoundViolation:
    t: int
    measured: float
    bound: float


@dataclass(frozen=True)
class BoundReport:
    measure: str
    checked: int
    violations: tuple[BoundViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_frame(self) -> pd.DataFrame:
        """One row per violation; empty with the same columns when the trace is within its envelope."""
        return pd.DataFrame(
            {
                "t": np.array([v.t for v in self.violations], dtype=np.int64),
                "measured": np.array([v.measured for v in self.violations], dtype=float),
                "bound": np.array([v.bound for v in self.violations], dtype=float),
            },
            columns=list(VIOLATION_COLUMNS),
        )


def check_trace_against_bound(
    trace: Trace, env: RateEnvelope, measure: str = "primaldual", t_max: Optional[int] = None
) -> BoundReport:
    """Compare a measured trace with its envelope for every ``t`` in ``[S, t_max]``."""
    values = trace.measure(measure)
    last = len(trace) - 1 if t_max is None else min(t_max, len(trace) - 1)
    if env.S > last:
        raise exceptions.InvalidParameter(detail="The trace is shorter than S.", S=env.S, length=len(trace))
    if np.isnan(values[env.S : last + 1]).any():
        raise exceptions.InvalidParameter(detail=f"The trace has no {measure} values; run it with f* known.")

    ts = np.arange(env.S, last + 1)
    bounds = env.values(float(values[env.S]), ts)
    measured = values[env.S : last + 1]
    bad = np.flatnonzero(measured > bounds * (1.0 + BOUND_SLACK))
    violations = tuple(BoundViolation(int(ts[i]), float(measured[i]), float(bounds[i])) for i in bad)
    if violations:
        logger.info("%d of %d %s values exceed the %s envelope", len(violations), ts.size, measure, env.mode)
    return BoundReport(measure=measure, checked=int(ts.size), violations=violations)


@dataclass(frozen=True)
class SlopeFit:
    window: tuple[int, int]
    slope: float
    intercept: float
    r_squared: float
    samples: int


def fit_power_law(ts, values, floor: float = 0.0) -> SlopeFit:
    """Least-squares line through ``(log t, log value)`` over values above ``floor``."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > max(floor, 0.0)) & (ts > 0)
    if keep.sum() < MIN_SLOPE_SAMPLES:
        raise exceptions.InsufficientData(samples=int(keep.sum()), required=MIN_SLOPE_SAMPLES)
    log_t = np.log(ts[keep])
    log_v = np.log(values[keep])
    slope, intercept = np.polyfit(log_t, log_v, 1)
    residual = log_v - (slope * log_t + intercept)
    total = np.sum((log_v - log_v.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    window = (int(ts[keep].min()), int(ts[keep].max()))
    return SlopeFit(window=window, slope=float(slope), intercept=float(intercept), r_squared=r_squared, samples=int(keep.sum()))


def noise_floor(trace: Trace) -> float:
    """Level below which f(x) - f* is rounding noise for this trace."""
    reference = trace.f_star if trace.f_star is not None else float(np.max(np.abs(trace.column("f_x"))))
    return app_settings.FW_SLOPE_RELATIVE_FLOOR * max(1.0, abs(reference))


def fit_rate_slope(trace: Trace, measure: str, t_lo: int, t_hi: int, floor: Optional[float] = None) -> SlopeFit:
    """Empirical rate exponent of ``measure`` over ``t_lo <= t <= t_hi``."""
    if t_lo < 1 or t_hi <= 2 * t_lo:
        raise exceptions.InvalidParameter(detail="Need t_lo >= 1 and t_hi > 2 * t_lo.", t_lo=t_lo, t_hi=t_hi)
    if t_hi > len(trace):
        raise exceptions.InvalidParameter(detail="t_hi exceeds the trace length.", t_hi=t_hi, length=len(trace))
    floor = noise_floor(trace) if floor is None else floor
    values = trace.measure(measure)
    stop = min(t_hi, len(trace) - 1)
    ts = np.arange(t_lo, stop + 1)
    fit = fit_power_law(ts, values[t_lo : stop + 1], floor=floor)
    return SlopeFit(window=(t_lo, t_hi), slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared, samples=fit.samples)
