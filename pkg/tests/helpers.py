import math

import numpy as np

from openloop_fw.datasets import synth_regression
from openloop_fw.domains import LpBall
from openloop_fw.linalg import lq_norm
from openloop_fw.objectives import RegressionObjective
from openloop_fw.solver import analytic_optimum


def sqrt_g(t):
    return 2.0 + math.sqrt(t)


def breaks_after_fifty(t):
    return 2.0 if t < 50 else 1.0


def identity_instance(n=20, seed=1, p=2.0, factor=0.5):
    """Identity-design regression with its exact minimizer over the scaled lp-ball."""
    A, y, x_unc = synth_regression(seed, n, n, "identity")
    obj = RegressionObjective(A, y)
    region = LpBall(p=p, beta=factor * lq_norm(x_unc, p), dim=n)
    return obj, region, analytic_optimum(obj, region)


def random_unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)
