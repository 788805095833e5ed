"""Least squares on the cusp: uniform points against Christoffel-weighted points.

Fits a synthetic target with a known best-approximation error of 1e-4 at
m = 3n and prints the mean squared L2 error over a few trials.
"""

import numpy as np

from christoffel_wls import (
    ChristoffelEvaluator,
    PolynomialSpace,
    SamplingMeasure,
    SyntheticTarget,
    WeightedSample,
    builtin,
    exact_l2_error,
    fit,
    orthonormalize_exact,
    sample_uniform,
)
from christoffel_wls.least_squares import RankError

DEGREE, TRIALS = 8, 10

D = builtin("cusp")
full = orthonormalize_exact(PolynomialSpace.for_domain(D, DEGREE + 1), D)
n = PolynomialSpace.for_domain(D, DEGREE).n
target = SyntheticTarget.default(full, n, 1e-4)
basis = full.truncate(n)
m = 3 * n
rng = np.random.default_rng(1)
optimal = SamplingMeasure.optimal(ChristoffelEvaluator(basis), D, rng)

errors = {"uniform": [], "optimal": []}
for _ in range(TRIALS):
    x = sample_uniform(D, m, rng)
    draws = {"uniform": WeightedSample(x, np.ones(m)), "optimal": optimal.sample(m, rng)}
    for label, s in draws.items():
        try:
            errors[label].append(exact_l2_error(fit(s, target(s.points), basis), target))
        except RankError:
            errors[label].append(np.inf)

print(f"n = {n}, m = {m}, best approximation error 1e-4")
for label, e in errors.items():
    print(f"{label:8s} mean {np.mean(e):.3e}  median {np.median(e):.3e}")
