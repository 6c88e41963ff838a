"""Open-loop step-size rules ``eta_t = g(t) / (t + g(t))``.

Three kinds are supported: ``fixed`` (``g(t) = l``), ``log_adaptive``
(``g(t) = 2 + log(t + 1)``, natural log) and ``custom`` (any callable). A
valid ``g`` maps into ``[2, inf)``, is non-decreasing (A1) and keeps
``t / g(t)`` non-decreasing (A2), which is the same as a non-increasing
step-size sequence. Iterations are indexed from ``t = 0``.
"""

import math
import pkgutil
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from openloop_fw import exceptions
from openloop_fw.settings import app_settings

FIXED = "fixed"
LOG_ADAPTIVE = "log_adaptive"
CUSTOM = "custom"

#: Relative slack allowed when comparing the two sides of a product bound.
PRODUCT_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class Schedule:
    kind: str
    description: str
    ell: Optional[float] = None
    func: Optional[Callable[[int], float]] = field(default=None, compare=False, repr=False)

    @classmethod
    def fixed(cls, ell: float) -> "Schedule":
        ell = float(ell)
        if not math.isfinite(ell) or ell < 2:
            raise exceptions.InvalidSchedule(detail="Fixed schedules need l >= 2.", ell=ell)
        label = f"{ell:g}"
        return cls(kind=FIXED, description=f"fixed:{label}", ell=ell)

    @classmethod
    def log_adaptive(cls) -> "Schedule":
        return cls(kind=LOG_ADAPTIVE, description="logadaptive")

    @classmethod
    def custom(cls, func: Callable[[int], float], description: str = "custom") -> "Schedule":
        if not callable(func):
            raise exceptions.InvalidSchedule(detail="A custom schedule needs a callable g(t).")
        return cls(kind=CUSTOM, description=description, func=func)

    @property
    def spec(self) -> str:
        return self.description

    def g(self, t: int) -> float:
        if self.kind == FIXED:
            return self.ell
        if self.kind == LOG_ADAPTIVE:
            return 2.0 + math.log1p(t)
        value = self.func(t)
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise exceptions.InvalidSchedule(detail="g(t) did not return a number.", t=t, value=value)
        if not math.isfinite(value) or value < 2:
            raise exceptions.InvalidSchedule(t=t, value=value)
        return value

    def g_range(self, start: int, stop: int) -> np.ndarray:
        """``g(t)`` for ``t = start, ..., stop - 1`` as an array."""
        ts = np.arange(start, stop)
        if self.kind == FIXED:
            return np.full(ts.shape, self.ell, dtype=float)
        if self.kind == LOG_ADAPTIVE:
            return 2.0 + np.log1p(ts.astype(float))
        return np.array([self.g(int(t)) for t in ts], dtype=float)

    def eta(self, t: int) -> float:
        if t < 0:
            raise exceptions.InvalidParameter(detail="t must be non-negative.", t=t)
        g = self.g(t)
        return g / (t + g)

    def eta_range(self, start: int, stop: int) -> np.ndarray:
        ts = np.arange(start, stop, dtype=float)
        g = self.g_range(start, stop)
        return g / (ts + g)

    def __str__(self):
        return self.description


def parse_schedule(spec: str) -> Schedule:
    """Build a schedule from ``fixed:<l>``, ``logadaptive`` or ``custom[:<module>:<callable>]``."""
    text = spec.strip()
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    if kind == "fixed":
        try:
            ell = float(rest)
        except ValueError:
            raise exceptions.InvalidSchedule(detail=f"Cannot read l from schedule spec {spec!r}.")
        return Schedule.fixed(ell)
    if kind in ("logadaptive", "log_adaptive", "log-adaptive") and not rest:
        return Schedule.log_adaptive()
    if kind == "custom":
        if rest:
            try:
                func = pkgutil.resolve_name(rest)
            except (ImportError, AttributeError, ValueError) as exc:
                raise exceptions.InvalidSchedule(detail=f"Cannot import g(t) from {rest!r}.") from exc
        else:
            func = app_settings._get_callable_setting("FW_CUSTOM_SCHEDULE_CALLABLE")
        return Schedule.custom(func, description=text)
    raise exceptions.InvalidSchedule(detail=f"Unknown schedule spec {spec!r}. Use fixed:<l>, logadaptive or custom:<path>.")


def eta(schedule: Schedule, t: int) -> float:
    return schedule.eta(t)


@dataclass(frozen=True)
class AssumptionViolation:
    assumption: str
    t: int
    lhs: float
    rhs: float


@dataclass(frozen=True)
class AssumptionReport:
    t_max: int
    a1_ok: bool
    a2_ok: bool
    first_violation: Optional[AssumptionViolation] = None

    @property
    def ok(self) -> bool:
        return self.a1_ok and self.a2_ok


def validate_assumptions(schedule: Schedule, t_max: int) -> AssumptionReport:
    """Check A1 (g non-decreasing) and A2 (t/g(t) non-decreasing) for all t < t_max.

    A custom ``g`` can only be checked on a finite prefix, so the report is
    exactly as strong as the horizon it was asked for.
    """
    if t_max < 1:
        raise exceptions.InvalidParameter(detail="t_max must be at least 1.", t_max=t_max)
    g = schedule.g_range(0, t_max + 1)
    ts = np.arange(t_max + 1, dtype=float)
    ratio = ts / g

    a1_bad = np.flatnonzero(g[1:] < g[:-1])
    a2_bad = np.flatnonzero(ratio[1:] < ratio[:-1])

    first = None
    if a1_bad.size and (not a2_bad.size or a1_bad[0] <= a2_bad[0]):
        t = int(a1_bad[0])
        first = AssumptionViolation("A1", t, float(g[t]), float(g[t + 1]))
    elif a2_bad.size:
        t = int(a2_bad[0])
        first = AssumptionViolation("A2", t, float(ratio[t]), float(ratio[t + 1]))

    return AssumptionReport(t_max=t_max, a1_ok=not a1_bad.size, a2_ok=not a2_bad.size, first_violation=first)


def product_factor(schedule: Schedule, i: int, epsilon: float) -> float:
    """One factor ``1 - (1 - eps/g(i)) * eta_i`` of the cumulative product."""
    return 1.0 - (1.0 - epsilon / schedule.g(i)) * schedule.eta(i)


@dataclass(frozen=True)
class ProductBoundCheck:
    schedule: str
    S: int
    epsilon: float
    t: int
    log_lhs: float
    log_rhs: float
    satisfied: bool

    @property
    def lhs(self) -> float:
        return math.exp(self.log_lhs)

    @property
    def rhs(self) -> float:
        return math.exp(self.log_rhs)


def _log_eta(schedule: Schedule, t: int) -> float:
    g = schedule.g(t)
    return math.log(g) - math.log(t + g)


def _check_product_arguments(schedule: Schedule, S: int, epsilon: float, t: int) -> float:
    if S < 1 or t < S:
        raise exceptions.InvalidParameter(detail="Need 1 <= S <= t.", S=S, t=t)
    g_S = schedule.g(S)
    if not 0 < epsilon < g_S:
        raise exceptions.InvalidParameter(detail="epsilon must lie in ]0, g(S)[.", epsilon=epsilon, g_S=g_S)
    return g_S


def _log_product(schedule: Schedule, S: int, epsilon: float, t: int) -> float:
    # Each factor equals (i + eps) / (i + g(i)); summing logs avoids underflow for long horizons.
    i = np.arange(S, t + 1, dtype=float)
    g = schedule.g_range(S, t + 1)
    return math.fsum(np.log1p((epsilon - g) / (i + g)))


def cumulative_product_check(schedule: Schedule, S: int, epsilon: float, t: int) -> ProductBoundCheck:
    """Compare ``prod_{i=S}^t (1 - (1 - eps/g(i)) eta_i)`` with ``(eta_t / eta_{S-1})^(g(S) - eps)``.

    Both sides are handled in log-space; ``satisfied`` means
    ``lhs <= rhs * (1 + 1e-12)``.
    """
    g_S = _check_product_arguments(schedule, S, epsilon, t)
    log_lhs = _log_product(schedule, S, epsilon, t)
    log_rhs = (g_S - epsilon) * (_log_eta(schedule, t) - _log_eta(schedule, S - 1))
    return ProductBoundCheck(
        schedule=schedule.description,
        S=S,
        epsilon=epsilon,
        t=t,
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        satisfied=log_lhs <= log_rhs + math.log1p(PRODUCT_BOUND_SLACK),
    )


def classic_product_check(schedule: Schedule, S: int, epsilon: float, t: int) -> ProductBoundCheck:
    """The older fixed-l bound, which carries an extra ``exp(eps * l / S)`` factor."""
    if schedule.kind != FIXED:
        raise exceptions.InvalidSchedule(detail="The classic product bound only applies to fixed schedules.")
    g_S = _check_product_arguments(schedule, S, epsilon, t)
    log_lhs = _log_product(schedule, S, epsilon, t)
    log_rhs = (g_S - epsilon) * (_log_eta(schedule, t) - _log_eta(schedule, S - 1)) + epsilon * schedule.ell / S
    return ProductBoundCheck(
        schedule=schedule.description,
        S=S,
        epsilon=epsilon,
        t=t,
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        satisfied=log_lhs <= log_rhs + math.log1p(PRODUCT_BOUND_SLACK),
    )


def default_epsilon_grid(g_S: float) -> list:
    """Epsilons with ``g(S) - eps >= 1``, the range where the product bound holds.

    For ``g(S) - eps < 1`` every factor exceeds its share of the right-hand
    side (fixed:2, S = t = 1, eps = 1.9 gives 29/30 against (2/3)^0.1).
    """
    return sorted({eps for eps in (0.1, 0.5, 1.0, g_S - 1.0) if 0 < eps <= g_S - 1.0})


def default_horizon_grid(S: int, t_max: int = 10**4) -> list:
    candidates = {S, S + 1, 10, 100, 1000, 10**4}
    return sorted(t for t in candidates if S <= t <= max(t_max, S + 1))


@dataclass(frozen=True)
class LemmaSweep:
    checks: tuple
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def lemma_sweep(
    schedules: Sequence[Schedule],
    S_values: Iterable[int] = range(1, 21),
    epsilons: Optional[Callable[[float], list]] = None,
    horizons: Optional[Callable[[int], list]] = None,
) -> LemmaSweep:
    """Evaluate ``cumulative_product_check`` over a grid and collect violations."""
    epsilons = epsilons or default_epsilon_grid
    horizons = horizons or default_horizon_grid
    checks = []
    for schedule in schedules:
        for S in S_values:
            g_S = schedule.g(S)
            for epsilon in epsilons(g_S):
                for t in horizons(S):
                    checks.append(cumulative_product_check(schedule, S, epsilon, t))
    violations = tuple(check for check in checks if not check.satisfied)
    return LemmaSweep(checks=tuple(checks), violations=violations)
