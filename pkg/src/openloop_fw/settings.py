# Settings pattern adapted from
# https://overtag.dk/v2/blog/a-settings-pattern-for-reusable-django-apps/
import os
import pkgutil
from dataclasses import dataclass
from typing import Callable, Union

from openloop_fw.exceptions import ImproperlyConfigured

settings_prefix = "FW_"

_TRUE_VALUES = {"1", "true", "yes", "on"}
_FALSE_VALUES = {"0", "false", "no", "off", ""}


def _coerce(name: str, raw: str, default):
    """Convert an environment string to the type of the setting's default."""
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in _TRUE_VALUES:
            return True
        if lowered in _FALSE_VALUES:
            return False
        raise ImproperlyConfigured(f"{name} must be a boolean. Got {raw!r}.")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ImproperlyConfigured(f"{name} must be an integer. Got {raw!r}.")
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ImproperlyConfigured(f"{name} must be a number. Got {raw!r}.")
    return raw


@dataclass(frozen=True)
class AppSettings:
    """Access this instance as ``openloop_fw.settings.app_settings``."""

    FW_EXCEPTION_LOGGER_NAME = "openloop_fw"
    """The logger name to use for translated exceptions. Leave blank to disable logging."""

    FW_POWER_TOL = 1e-10
    """Relative residual ``||G^T u - sigma v|| <= tol * sigma`` at which power
    iteration stops."""

    FW_POWER_MAX_ITER = 10000
    """Iteration cap for power iteration. Exceeding it raises ``ConvergenceFailure``."""

    FW_POWER_SEED = 0
    """Seed for the perturbation mixed into the all-ones start vector of power iteration."""

    FW_LMO_TOL = 1e-9
    """Tolerance the solver hands to the nuclear-norm LMO."""

    FW_RANK_TOL = 1e-12
    """Relative pivot cutoff below which ``least_squares`` declares a design
    matrix rank deficient."""

    FW_IDENTITY_WARN_TOL = 1e-9
    """Relative residual of the objective reduction identity above which a
    warning is logged."""

    FW_IDENTITY_FAIL_TOL = 1e-6
    """Relative residual of the objective reduction identity above which the
    run is aborted with ``NumericalInconsistency``. Such a residual means the
    gradient and the value of the objective disagree."""

    FW_MEMBERSHIP_TOL = 1e-9
    """Relative slack used when asserting that every iterate stays feasible."""

    FW_REFERENCE_BUDGET = 10000
    """Number of log-adaptive iterations spent estimating f* when no analytic
    optimum is known."""

    FW_ETA_GRID_SIZE = 64
    """Number of step-sizes tried per sample point during growth certification."""

    FW_ETA_GRID_MIN = 1e-4
    """Smallest step-size of the logarithmic certification grid (the largest is 1)."""

    FW_SLOPE_RELATIVE_FLOOR = 1e-12
    """Measures below ``floor * max(1, |f_ref|)`` are dropped from slope fits.

    Below this level f(x) - f* is dominated by the rounding of the iterate
    itself, so the log-log line flattens into noise."""

    FW_CUSTOM_SCHEDULE_CALLABLE: Callable[[int], float] = ""
    """Advanced usage. Import path to a callable ``g(t)`` used by the
    ``custom`` schedule spec when the spec carries no path of its own.

    For example: 'my_project.schedules.sqrt_g'
    """

    def __getattribute__(self, __name: str):
        # Check if the environment should override the library default.
        # Only prefixed names are looked up so unrelated attributes are never shadowed.
        if __name.startswith(settings_prefix) and __name in os.environ:
            default = super().__getattribute__(__name)
            return _coerce(__name, os.environ[__name], default)

        return super().__getattribute__(__name)

    def _get_callable_setting(self, key: str) -> Union[Callable, None]:
        """Imports and returns a callable setting."""

        value = self.__getattribute__(key)

        try:
            func = pkgutil.resolve_name(value)
        except (ImportError, AttributeError, ValueError) as exc:
            raise ImproperlyConfigured(f"{key} refers to {value!r}, which could not be imported.") from exc
        if not callable(func):
            raise ImproperlyConfigured(f"{key} must be a callable. Got {repr(func)}.")

        return func


app_settings = AppSettings()
