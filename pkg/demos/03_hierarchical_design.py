"""Nested experimental design: grow the sample from degree 3 to degree 5 on the disc.

Points drawn at an earlier level are kept; each new level only adds points.
"""

import numpy as np

from christoffel_wls import LevelSchedule, algorithm3_hierarchical, builtin, gramian, total_degree_dims
from christoffel_wls.polyspace import PolynomialSpace, orthonormalize_exact

D = builtin("disc")
schedule = LevelSchedule.hierarchical(total_degree_dims(2, (3, 4, 5)), eps=0.01, delta=0.25)
state = algorithm3_hierarchical(schedule, D, np.random.default_rng(7), alpha_samples=50_000)

for q in range(1, state.q + 1):
    sample = state.sample(q)
    exact = orthonormalize_exact(PolynomialSpace.for_domain(D, 5, state.dims[q - 1]), D)
    _, dev, kappa = gramian(sample, exact)
    print(f"level {q}: n = {state.dims[q - 1]:3d}  m = {sample.m:5d}  new = {np.sum(sample.levels == q):5d}  "
          f"||G - I|| = {dev:.3f}  kappa(G) = {kappa:.2f}")
