"""End-to-end checks on desk-scale instances. Deselect with ``-m 'not slow'``."""

import numpy as np
import pytest

from openloop_fw import exceptions
from openloop_fw.analysis import (
    STRONG,
    WEAK,
    RateEnvelope,
    certify_growth,
    check_trace_against_bound,
    combine_certificates,
    fit_rate_slope,
    revalidate_certificate,
)
from openloop_fw.datasets import load_movielens, synthetic_bundle
from openloop_fw.domains import LpBall, NuclearBall
from openloop_fw.linalg import least_squares, lq_norm
from openloop_fw.schedules import Schedule
from openloop_fw.solver import fw_run, start_vertex

from .helpers import identity_instance

pytestmark = pytest.mark.slow

T_LONG = 10**4
FIXED_AND_ADAPTIVE = {
    "fixed:2": Schedule.fixed(2),
    "fixed:4": Schedule.fixed(4),
    "logadaptive": Schedule.log_adaptive(),
}


def _runs(obj, region, x_star, T=T_LONG, **kwargs):
    x0 = start_vertex(region, 1)
    return {name: fw_run(obj, region, schedule, T, x0=x0, x_star=x_star, **kwargs) for name, schedule in FIXED_AND_ADAPTIVE.items()}


def _tail_slope(trace):
    try:
        return fit_rate_slope(trace, "subopt", 100, len(trace)).slope
    except exceptions.InsufficientData:
        # Fast schedules can reach the noise floor before t = 100.
        return fit_rate_slope(trace, "subopt", 10, len(trace)).slope


def _first_below(values, level):
    below = np.flatnonzero(values <= level)
    return int(below[0]) if below.size else len(values)


def _assert_measure_ordering(trace):
    subopt, primaldual, gap = trace.measure("subopt"), trace.measure("primaldual"), trace.measure("gap")
    assert np.all(subopt <= primaldual + 1e-9)
    assert np.all(primaldual <= gap + 1e-9)


@pytest.fixture(scope="module")
def exterior_runs():
    obj, region, x_star = identity_instance(p=2.0, factor=0.5)
    return _runs(obj, region, x_star)


def test_exterior_l2_acceleration(exterior_runs):
    slopes = {name: _tail_slope(trace) for name, trace in exterior_runs.items()}
    assert -2.6 <= slopes["fixed:2"] <= -1.7
    assert slopes["fixed:4"] <= -3.3
    assert slopes["logadaptive"] <= slopes["fixed:4"] + 0.2

    adaptive = _first_below(exterior_runs["logadaptive"].measure("subopt"), 1e-10)
    assert adaptive < T_LONG
    assert adaptive <= _first_below(exterior_runs["fixed:4"].measure("subopt"), 1e-10)

    for trace in exterior_runs.values():
        _assert_measure_ordering(trace)


def test_exterior_l5_rate():
    obj, region, x_star = identity_instance(p=5.0, factor=0.5)
    runs = _runs(obj, region, x_star)
    slopes = {name: _tail_slope(trace) for name, trace in runs.items()}
    assert slopes["logadaptive"] <= -1.36
    assert slopes["logadaptive"] <= min(slopes["fixed:2"], slopes["fixed:4"]) + 0.2
    for trace in runs.values():
        _assert_measure_ordering(trace)


def test_interior_rate_is_capped():
    obj, region, x_star = identity_instance(p=2.0, factor=1.5)
    runs = _runs(obj, region, x_star)
    slopes = {name: _tail_slope(trace) for name, trace in runs.items()}
    assert -2.6 <= slopes["fixed:2"] <= -1.7
    assert -2.6 <= slopes["fixed:4"] <= -1.7
    assert -2.6 <= slopes["logadaptive"] <= -1.7
    # Interior iterates pay eta_t^2 ~ (g(t) / t)^2, a (g(T) / 2)^2 factor over fixed:2.
    final = {name: float(trace.measure("subopt")[-1]) for name, trace in runs.items()}
    polylog = (Schedule.log_adaptive().g(T_LONG) / 2.0) ** 2
    assert final["logadaptive"] <= 8.0 * polylog * min(final["fixed:2"], final["fixed:4"])
    for trace in runs.values():
        _assert_measure_ordering(trace)


def _identity_residual_instances(ratings_file):
    obj, region, _ = identity_instance(p=2.0, factor=0.5)
    yield "identity", obj, region

    bundle = synthetic_bundle(2, 60, 10, "gaussian")
    x_unc = least_squares(bundle.A, bundle.y)
    yield "gaussian", bundle.objective(), LpBall(p=5.0, beta=0.5 * lq_norm(x_unc, 5.0), dim=10)

    bundle = load_movielens(ratings_file, None)
    yield "completion", bundle.objective(rho=1.0), NuclearBall(beta=50.0, rows=bundle.rows, cols=bundle.cols)


def test_objective_reduction_identity(ratings_file):
    for name, obj, region in _identity_residual_instances(ratings_file):
        trace = fw_run(obj, region, Schedule.log_adaptive(), 2000, x0=start_vertex(region, 3))
        assert np.max(trace.column("identity_residual")) <= 1e-9, name


@pytest.mark.parametrize("schedule, epsilon", [(Schedule.log_adaptive(), 1.0), (Schedule.fixed(2), 1.0)], ids=str)
def test_strong_envelope_dominates_trace(schedule, epsilon):
    obj, region, x_star = identity_instance(p=2.0, factor=0.5)
    trace = fw_run(obj, region, schedule, 1000, x0=start_vertex(region, 1), x_star=x_star, keep_iterates=True)
    certificate = certify_growth(obj, region, STRONG, 0.5, n_samples=2000, seed=5, x_star=x_star, trajectory=trace.iterates)
    envelope = RateEnvelope(schedule, S=8, epsilon=epsilon, M=certificate.M_hat, r=0.5)
    report = check_trace_against_bound(trace, envelope, "primaldual")
    assert report.checked == 1000 - 8
    assert report.ok, report.violations[:3]


def test_weak_envelope_dominates_trace():
    obj, region, x_star = identity_instance(p=2.0, factor=1.5)
    schedule = Schedule.log_adaptive()
    trace = fw_run(obj, region, schedule, 1000, x0=start_vertex(region, 1), x_star=x_star, keep_iterates=True)
    strong = certify_growth(obj, region, STRONG, 0.0, n_samples=2000, seed=5, x_star=x_star, trajectory=trace.iterates)
    weak = certify_growth(obj, region, WEAK, 0.5, n_samples=2000, seed=5, x_star=x_star, trajectory=trace.iterates)
    M = combine_certificates(strong, weak)

    report = check_trace_against_bound(trace, RateEnvelope(schedule, S=8, epsilon=1.0, M=M, r=0.5, mode=WEAK), "subopt")
    assert report.ok, report.violations[:3]

    control = RateEnvelope(schedule, S=20, epsilon=0.1, M=M * 1e-12, r=0.5, mode=WEAK)
    assert not check_trace_against_bound(trace, control, "subopt").ok


@pytest.mark.parametrize("p, r", [(2.0, 0.5), (5.0, 0.4)])
def test_certificate_revalidates_on_a_fresh_sample(p, r):
    obj, region, x_star = identity_instance(p=p, factor=0.5)
    certificate = certify_growth(obj, region, STRONG, r, n_samples=2000, seed=11, x_star=x_star)
    report = revalidate_certificate(certificate, obj, region, seed=12, margin=1.05, n_samples=1000, x_star=x_star)
    assert report.evaluated > 0
    assert report.rate <= 0.01
