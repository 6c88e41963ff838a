import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from openloop_fw import exceptions
from openloop_fw.schedules import parse_schedule

ERR_UNKNOWN_PROBLEM = "fw.E010"
ERR_NO_DATASET = "fw.E011"
ERR_DATASET_MISSING = "fw.E012"
ERR_BETA_POLICY = "fw.E020"
ERR_BETA_NOT_POSITIVE = "fw.E021"
ERR_NO_SCHEDULES = "fw.E030"
ERR_BAD_SCHEDULE = "fw.E031"
ERR_HORIZON_TOO_SHORT = "fw.E040"
ERR_REFERENCE_BUDGET = "fw.E041"
ERR_P_NOT_ABOVE_ONE = "fw.E050"
ERR_COMPLETION_GEOMETRY = "fw.E051"
ERR_OUTPUT_NOT_WRITABLE = "fw.E060"

PROBLEMS = ("regression", "completion", "synthetic")


@dataclass(frozen=True)
class Issue:
    msg: str
    hint: Optional[str] = None
    id: str = ""

    def __str__(self):
        text = f"{self.id}: {self.msg}"
        return f"{text} HINT: {self.hint}" if self.hint else text


_registry: list[Callable] = []


def register(check: Callable) -> Callable:
    _registry.append(check)
    return check


@register
def check_problem(config) -> list[Issue]:
    errors = []

    if config.problem not in PROBLEMS:
        errors.append(
            Issue(
                f"Unknown problem {config.problem!r}.",
                hint="Set problem to one of: regression, completion, synthetic.",
                id=ERR_UNKNOWN_PROBLEM,
            )
        )
        return errors

    if config.problem in ("regression", "completion"):
        if not config.dataset:
            errors.append(
                Issue(
                    f"The {config.problem} problem needs a dataset.",
                    hint="Set dataset to a CSV file (regression) or a u.data ratings file (completion).",
                    id=ERR_NO_DATASET,
                )
            )
        elif not Path(config.dataset).is_file():
            errors.append(
                Issue(
                    f"Dataset {config.dataset} does not exist.",
                    hint="Check the dataset path; relative paths resolve against the working directory.",
                    id=ERR_DATASET_MISSING,
                )
            )
    return errors


@register
def check_beta_policy(config) -> list[Issue]:
    errors = []

    if (config.beta is None) == (config.beta_factor is None):
        errors.append(
            Issue(
                "Exactly one of beta and beta_factor must be set.",
                hint="Use beta for an absolute radius or beta_factor to scale ||x_unc||_p.",
                id=ERR_BETA_POLICY,
            )
        )
    for name in ("beta", "beta_factor"):
        value = getattr(config, name)
        if value is not None and not value > 0:
            errors.append(Issue(f"{name} must be positive. Got {value!r}.", id=ERR_BETA_NOT_POSITIVE))

    if config.problem == "completion" and config.beta is None:
        errors.append(
            Issue(
                "The completion problem needs an absolute beta.",
                hint="beta_factor scales the unconstrained optimizer, which only regression problems have.",
                id=ERR_COMPLETION_GEOMETRY,
            )
        )
    return errors


@register
def check_schedules(config) -> list[Issue]:
    errors = []

    if not config.schedules:
        errors.append(Issue("No schedules configured.", hint="For example: fixed:2, fixed:4, logadaptive", id=ERR_NO_SCHEDULES))

    for spec in config.schedules:
        try:
            parse_schedule(spec)
        except exceptions.FrankWolfeError as exc:
            errors.append(Issue(f"Schedule {spec!r} is invalid: {exc}", id=ERR_BAD_SCHEDULE))
    return errors


@register
def check_horizon(config) -> list[Issue]:
    errors = []

    if config.T < 10:
        errors.append(Issue(f"T must be at least 10. Got {config.T}.", id=ERR_HORIZON_TOO_SHORT))
    if config.reference_budget < 1000:
        errors.append(
            Issue(
                f"reference_budget must be at least 1000. Got {config.reference_budget}.",
                id=ERR_REFERENCE_BUDGET,
            )
        )
    return errors


@register
def check_geometry(config) -> list[Issue]:
    errors = []

    if config.problem != "completion" and not config.p > 1:
        errors.append(
            Issue(
                f"p must be greater than 1. Got {config.p!r}.",
                hint="The lp-ball oracle has no closed form for p = 1.",
                id=ERR_P_NOT_ABOVE_ONE,
            )
        )
    return errors


@register
def check_output(config) -> list[Issue]:
    errors = []

    # The nearest existing ancestor decides whether the directory can be created.
    target = Path(config.out).resolve()
    while not target.exists() and target != target.parent:
        target = target.parent
    if not target.is_dir() or not os.access(target, os.W_OK):
        errors.append(
            Issue(
                f"Output directory {config.out} cannot be written.",
                hint="Pick an out directory inside a writable location.",
                id=ERR_OUTPUT_NOT_WRITABLE,
            )
        )
    return errors


def collect_issues(config) -> list[Issue]:
    issues = []
    for check in _registry:
        issues.extend(check(config))
    return issues


def run_checks(config) -> None:
    """Raise ``ImproperlyConfigured`` listing every issue found in ``config``."""
    issues = collect_issues(config)
    if issues:
        raise exceptions.ImproperlyConfigured(
            detail="Invalid experiment configuration:\n" + "\n".join(f"  {issue}" for issue in issues),
            issues=issues,
        )
