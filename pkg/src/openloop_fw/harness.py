"""Experiment runner: builds an instance from a config, runs every schedule and writes CSV outputs.

Config files are INI with a single ``[experiment]`` section::

    [experiment]
    problem = synthetic
    synth_kind = identity
    seed = 1
    n = 20
    p = 2
    beta_factor = 0.5
    schedules = fixed:2, fixed:4, logadaptive
    T = 10000
    out = runs/exterior
"""

import configparser
import dataclasses
import json
import logging
import math
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from openloop_fw import __version__, exceptions
from openloop_fw.analysis import (
    STRONG,
    WEAK,
    BoundReport,
    GrowthCertificate,
    RateEnvelope,
    certify_growth,
    check_trace_against_bound,
    combine_certificates,
    fit_rate_slope,
)
from openloop_fw.checks import run_checks
from openloop_fw.datasets import DatasetBundle, load_dense_csv, load_movielens, synthetic_bundle
from openloop_fw.domains import FeasibleRegion, LpBall, NuclearBall
from openloop_fw.linalg import least_squares, lq_norm
from openloop_fw.objectives import Objective
from openloop_fw.schedules import parse_schedule, validate_assumptions
from openloop_fw.solver import (
    CSV_FLOAT_FORMAT,
    Trace,
    analytic_optimum,
    fw_run,
    reference_optimum,
    start_vertex,
)
from openloop_fw.utils import slugify

logger = logging.getLogger(__name__)

REGRESSION = "regression"
COMPLETION = "completion"
SYNTHETIC = "synthetic"
PROBLEMS = (REGRESSION, COMPLETION, SYNTHETIC)

MEASURES = ("gap", "primaldual", "subopt")
SUMMARY_COLUMNS = ("schedule", "measure", "final_value", "slope", "r_squared")
CONFIG_SECTION = "experiment"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = SYNTHETIC
    dataset: Optional[str] = None
    target: str = "target"
    synth_kind: str = "identity"
    seed: int = 1
    m: Optional[int] = None
    n: int = 20
    p: float = 2.0
    beta: Optional[float] = None
    beta_factor: Optional[float] = None
    rho: float = 1.0
    subsample: Optional[tuple[int, int, int]] = None
    schedules: tuple[str, ...] = ("fixed:2", "fixed:4", "logadaptive")
    T: int = 10000
    out: str = "fw_out"
    reference_budget: int = 10000
    gap_tol: Optional[float] = None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except FileNotFoundError:
            raise exceptions.ImproperlyConfigured(detail=f"Config file {path} does not exist.")
        except configparser.Error as exc:
            raise exceptions.ImproperlyConfigured(detail=f"Cannot read config file {path}: {exc}")
        if not parser.has_section(CONFIG_SECTION):
            raise exceptions.ImproperlyConfigured(detail=f"Config file {path} has no [{CONFIG_SECTION}] section.")
        return cls.from_mapping(dict(parser.items(CONFIG_SECTION)))

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise exceptions.ImproperlyConfigured(detail=f"Unknown config keys: {', '.join(unknown)}.")
        return cls(**{key: _convert(key, raw) for key, raw in values.items()})

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Replace fields whose override is not ``None``; strings are converted like file values."""
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            changes[key] = _convert(key, value) if isinstance(value, str) else value
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        return dataclasses.asdict(self)


_INT_FIELDS = {"seed", "m", "n", "T", "reference_budget"}
_FLOAT_FIELDS = {"p", "beta", "beta_factor", "rho", "gap_tol"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise exceptions.ImproperlyConfigured(detail=f"{key} must be a number. Got {raw!r}.")
    if key == "schedules":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if key == "subsample":
        try:
            users, items, seed = (int(part) for part in raw.split(","))
        except ValueError:
            raise exceptions.ImproperlyConfigured(detail=f"subsample must read max_users,max_items,seed. Got {raw!r}.")
        return (users, items, seed)
    if key == "dataset":
        return raw or None
    return raw


@dataclass(frozen=True)
class Instance:
    bundle: DatasetBundle
    objective: Objective
    region: FeasibleRegion
    x_unc: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Reference:
    """The f* used for subopt, with the point it is attained at."""

    f_star: float
    certified_lower: float
    point: np.ndarray
    source: str


def load_bundle(config: ExperimentConfig) -> DatasetBundle:
    if config.problem == SYNTHETIC:
        m = config.n if config.m is None else config.m
        return synthetic_bundle(config.seed, m, config.n, config.synth_kind)
    if config.problem == REGRESSION:
        return load_dense_csv(config.dataset, config.target)
    return load_movielens(config.dataset, config.subsample)


def resolve_beta(config: ExperimentConfig, x_unc: Optional[np.ndarray]) -> float:
    """Absolute radius, or ``beta_factor * ||x_unc||_p`` for regression problems."""
    if config.beta is not None:
        beta = config.beta
    elif x_unc is None:
        raise exceptions.ImproperlyConfigured(detail="A beta factor needs an unconstrained optimizer; set beta.")
    else:
        beta = config.beta_factor * lq_norm(x_unc, config.p)
    if not beta > 0:
        raise exceptions.InvalidParameter(detail="The resolved radius must be positive.", beta=beta)
    return float(beta)


def build_instance(config: ExperimentConfig) -> Instance:
    bundle = load_bundle(config)
    objective = bundle.objective(rho=config.rho)
    if config.problem == COMPLETION:
        beta = resolve_beta(config, None)
        return Instance(bundle, objective, NuclearBall(beta=beta, rows=bundle.rows, cols=bundle.cols))
    x_unc = least_squares(bundle.A, bundle.y)
    beta = resolve_beta(config, x_unc)
    return Instance(bundle, objective, LpBall(p=config.p, beta=beta, dim=bundle.A.shape[1]), x_unc=x_unc)


def find_reference(instance: Instance, budget: int) -> Reference:
    """Exact optimum when known (unconstrained optimizer feasible, or identity design), else a long run."""
    obj, region = instance.objective, instance.region
    if instance.x_unc is not None and region.contains(instance.x_unc, tol=0.0):
        point = instance.x_unc
        source = "unconstrained"
    else:
        point = analytic_optimum(obj, region)
        source = "analytic"
    if point is not None:
        value = obj.value(point)
        return Reference(f_star=value, certified_lower=value, point=point, source=source)
    result = reference_optimum(obj, region, budget)
    return Reference(f_star=result.f_star_estimate, certified_lower=result.certified_lower, point=result.point, source="reference_run")


def tail_window(T: int) -> tuple[int, int]:
    return max(10, T // 100), T


def summarize(spec: str, trace: Trace, T: int) -> list:
    t_lo, t_hi = tail_window(T)
    t_hi = min(t_hi, len(trace))
    rows = []
    for measure in MEASURES:
        values = trace.measure(measure)
        slope = r_squared = math.nan
        try:
            fit = fit_rate_slope(trace, measure, t_lo, t_hi)
            slope, r_squared = fit.slope, fit.r_squared
        except (exceptions.InsufficientData, exceptions.InvalidParameter) as exc:
            logger.warning("No %s slope for %s: %s", measure, spec, exc)
        rows.append(
            {"schedule": spec, "measure": measure, "final_value": float(values[-1]), "slope": slope, "r_squared": r_squared}
        )
    return rows


def guide_frame(T: int) -> pd.DataFrame:
    """``t^-2`` normalized to 1 at the start of the tail window."""
    t_lo, t_hi = tail_window(T)
    ts = np.arange(t_lo, t_hi + 1)
    return pd.DataFrame({"t": ts, "guide": (t_lo / ts.astype(float)) ** 2})


def _write_csv(frame: pd.DataFrame, path: Path, written: list) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    written.append(path)
    logger.info("Wrote %s", path)
    return path


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every configured schedule on one instance and write traces, summary, guide and manifest.

    Returns the manifest. On failure every file written so far is removed.
    """
    run_checks(config)
    out = Path(config.out)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        manifest = _run(config, out, written)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    return manifest


def _run(config: ExperimentConfig, out: Path, written: list) -> dict:
    instance = build_instance(config)
    reference = find_reference(instance, config.reference_budget)
    logger.info("f* = %.17g (%s), region %s", reference.f_star, reference.source, instance.region.spec)

    outputs = []
    summary = []
    for spec in config.schedules:
        schedule = parse_schedule(spec)
        report = validate_assumptions(schedule, config.T)
        if not report.ok:
            violation = report.first_violation
            raise exceptions.InvalidSchedule(
                detail=f"{spec} violates {violation.assumption} at t={violation.t}.",
                lhs=violation.lhs,
                rhs=violation.rhs,
            )
        trace = fw_run(
            instance.objective,
            instance.region,
            schedule,
            config.T,
            x0=start_vertex(instance.region, config.seed),
            x_star=reference.point,
            gap_tol=config.gap_tol,
            seed=config.seed,
        )
        path = _write_csv(trace.to_frame(), out / f"trace_{slugify(spec)}.csv", written)
        outputs.append({"kind": "trace", "schedule": spec, "path": path.name, "rows": len(trace)})
        summary.extend(summarize(spec, trace, config.T))

    path = _write_csv(pd.DataFrame(summary, columns=list(SUMMARY_COLUMNS)), out / "summary.csv", written)
    outputs.append({"kind": "summary", "path": path.name, "rows": len(summary)})
    path = _write_csv(guide_frame(config.T), out / "guide.csv", written)
    outputs.append({"kind": "guide", "path": path.name})

    manifest = {
        "version": __version__,
        "config": config.echo(),
        "seed": config.seed,
        "instance": {
            "objective": instance.objective.describe(),
            "region": instance.region.spec,
            "beta": instance.region.beta,
        },
        "reference": {
            "f_star": reference.f_star,
            "certified_lower": reference.certified_lower,
            "source": reference.source,
        },
        "outputs": outputs,
    }
    path = out / "manifest.json"
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    written.append(path)
    logger.info("Wrote %s", path)
    return manifest


@dataclass(frozen=True)
class Certification:
    certificate: GrowthCertificate
    #: ``None`` when ``r = 1``, which has no rate envelope.
    bound: Optional[BoundReport] = None


def certify_experiment(
    config: ExperimentConfig,
    mode: str,
    r: float,
    n_samples: int = 200,
    n_eta: Optional[int] = None,
    S: int = 8,
    epsilon: float = 1.0,
) -> Certification:
    """Certify growth on the configured instance along a trajectory of its first schedule.

    The certificate is written to ``<out>/certificate_<mode>.csv``. For ``r < 1``
    a run of the first schedule is then checked against the envelope the
    certificate implies (``primaldual`` for strong growth, ``subopt`` for weak
    growth) and the points above it go to ``<out>/violations_<measure>.csv``.
    A weak envelope uses the constant combined with a strong ``(M, 0)``
    certificate of the same sample size.
    """
    run_checks(config)
    instance = build_instance(config)
    obj, region = instance.objective, instance.region
    reference = find_reference(instance, config.reference_budget)
    schedule = parse_schedule(config.schedules[0])
    sampling = {"n_samples": n_samples, "n_eta": n_eta, "seed": config.seed, "x_star": reference.point, "schedule": schedule}
    certificate = certify_growth(obj, region, mode, r, **sampling)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(pd.DataFrame([certificate.as_row()]), out / f"certificate_{mode}.csv", [])
    if not r < 1:
        logger.warning("No rate envelope for r = 1; skipping the violation report.")
        return Certification(certificate)

    M = certificate.M_hat
    if mode == WEAK:
        M = combine_certificates(certify_growth(obj, region, STRONG, 0.0, **sampling), certificate)
    envelope = RateEnvelope(schedule, S, epsilon, M, r, mode=mode)
    trace = fw_run(obj, region, schedule, config.T, x0=start_vertex(region, config.seed), x_star=reference.point, seed=config.seed)
    measure = "primaldual" if mode == STRONG else "subopt"
    report = check_trace_against_bound(trace, envelope, measure)
    _write_csv(report.to_frame(), out / f"violations_{measure}.csv", [])
    return Certification(certificate, report)
