"""Where does the optimal sampling measure put its mass?

Prints ``max k_n / n`` and the share of optimal samples that land near the
boundary, for each built-in domain.  Runs in a few seconds.
"""

import numpy as np

from christoffel_wls import (
    ChristoffelEvaluator,
    PolynomialSpace,
    SamplingMeasure,
    builtin,
    orthonormalize_exact,
    sample_uniform,
)
from christoffel_wls.christoffel import sampled_sup
from christoffel_wls.geometry import distance_to_boundary_pieces

DEGREE = 8

rng = np.random.default_rng(0)
print(f"{'domain':16s} {'n':>4s} {'max k/n':>9s} {'near boundary (mu)':>19s} {'(sigma*)':>9s}")
for name in ("square", "disc", "corner_polygon", "cusp"):
    D = builtin(name)
    ev = ChristoffelEvaluator(orthonormalize_exact(PolynomialSpace.for_domain(D, DEGREE), D))
    sup = sampled_sup(ev, D, 20_000, rng)
    measure = SamplingMeasure.optimal(ev, D, rng)
    opt = measure.sample(4000, rng).points
    uni = sample_uniform(D, 4000, rng)

    def near(x):
        return float(np.mean([min(distance_to_boundary_pieces(D, p)) < 0.05 for p in x]))

    print(f"{name:16s} {ev.n:4d} {sup / ev.n:9.2f} {near(uni):19.3f} {near(opt):9.3f}")
