import math

import numpy as np
import pytest

from christoffel_wls.algorithms import algorithm1_offline
from christoffel_wls.christoffel import (
    ChristoffelEvaluator,
    SamplingMeasure,
    build_envelope,
    estimate_alpha,
    estimate_sup,
    evaluate_k,
    heatmap,
    integral_check,
    rejection_sample,
    sample_measure,
)
from christoffel_wls.geometry import DISC_RADIUS, Domain, builtin, sample_uniform
from christoffel_wls.least_squares import gramian
from christoffel_wls.polyspace import PolynomialSpace, orthonormalize_exact


def exact_ev(name, degree):
    D = builtin(name)
    return ChristoffelEvaluator(orthonormalize_exact(PolynomialSpace.for_domain(D, degree), D))


class TestEvaluate:
    def test_constant(self, rng):
        ev = exact_ev("cusp", 0)
        assert np.allclose(ev(sample_uniform(builtin("cusp"), 100, rng)), 1.0)

    def test_square_degree_one(self, rng):
        ev = exact_ev("square", 1)
        assert evaluate_k(ev, [1.0, 1.0]) == pytest.approx(7.0, abs=1e-12)
        x = rng.uniform(-1, 1, (200, 2))
        assert np.allclose(evaluate_k(ev, x), 1 + 3 * x[:, 0] ** 2 + 3 * x[:, 1] ** 2, rtol=1e-13)

    def test_extremality(self, rng):
        D = builtin("corner_polygon")
        ev = exact_ev("corner_polygon", 7)
        x = sample_uniform(D, 100, rng)
        L = ev.basis(x)
        k = ev(x)
        c = rng.standard_normal((100, ev.n))
        ratio = (np.einsum("ij,kj->ik", L, c) ** 2) / np.sum(c * c, axis=1)[None, :]
        assert np.all(ratio <= k[:, None] * (1 + 1e-10))
        # equality at c = L(x)
        assert np.allclose(np.sum(L * L, axis=1), k, rtol=1e-14)

    def test_monotone_in_n(self, rng):
        ev = exact_ev("disc", 8)
        x = sample_uniform(builtin("disc"), 500, rng)
        prev = np.zeros(len(x))
        for k in range(1, ev.n + 1):
            cur = ev.truncate(k)(x)
            assert np.all(cur >= prev - 1e-12)
            prev = cur

    def test_affine_invariance(self, rng):
        sq = builtin("square")
        moved = Domain("moved_square", lambda x: (np.abs(x[:, 0] - 2) <= 1) & (np.abs(x[:, 1] + 1) <= 2),
                       np.array([[1.0, 3.0], [-3.0, 1.0]]), 8.0, sq.moment_oracle)
        a = ChristoffelEvaluator(orthonormalize_exact(PolynomialSpace.for_domain(sq, 6), sq))
        b = ChristoffelEvaluator(orthonormalize_exact(PolynomialSpace.for_domain(moved, 6), moved))
        x = rng.uniform(-1, 1, (300, 2))
        mapped = np.column_stack([x[:, 0] + 2, 2 * x[:, 1] - 1])
        assert np.allclose(a(x), b(mapped), rtol=1e-11)

    def test_disc_boundary_exceeds_interior(self):
        ev = exact_ev("disc", 6)
        t = np.linspace(0, 2 * np.pi, 9)
        boundary = ev(DISC_RADIUS * np.column_stack([np.cos(t), np.sin(t)]))
        assert np.ptp(boundary) <= 1e-9 * boundary.max()
        assert ev(np.zeros((1, 2)))[0] < boundary.min()


class TestSup:
    def test_constant(self, rng):
        # the cusp has no proven bound, so only the safety factor applies
        assert estimate_sup(exact_ev("cusp", 0), builtin("cusp"), 1000, rng) == pytest.approx(1.2)
        # on the disc the closed-form bound k = 1 is smaller
        assert estimate_sup(exact_ev("disc", 0), builtin("disc"), 1000, rng) == pytest.approx(1.0)

    def test_square_capped(self, rng):
        assert estimate_sup(exact_ev("square", 1), builtin("square"), 1000, rng) <= 9.0

    def test_disc_sandwich(self, rng):
        ev = exact_ev("disc", 10)
        est = estimate_sup(ev, builtin("disc"), 10_000, rng)
        assert math.exp(-1) * 66**1.5 <= est <= 3 * 66**1.5

    def test_probe_count(self, rng):
        with pytest.raises(ValueError):
            estimate_sup(exact_ev("disc", 1), builtin("disc"), 10, rng)


class TestIntegral:
    def test_constant(self):
        assert integral_check(exact_ev("square", 0), builtin("square")) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("name,degree,n", [("disc", 15, 136), ("cusp", 10, 66)])
    def test_trace(self, name, degree, n):
        assert abs(integral_check(exact_ev(name, degree), builtin(name)) - n) <= 1e-8

    @pytest.mark.parametrize("name", ["disc", "corner_polygon", "cusp"])
    def test_monte_carlo(self, name, rng):
        ev = exact_ev(name, 6)
        k = ev(sample_uniform(builtin(name), 200_000, rng))
        assert abs(k.mean() - ev.n) <= 4 * k.std() / math.sqrt(len(k))

    def test_alpha_of_exact_basis(self, rng):
        alpha, se = estimate_alpha(exact_ev("disc", 5), builtin("disc"), rng, 100_000)
        assert abs(alpha - 1) <= 4 * se


class TestSampling:
    def test_mu(self, rng):
        s = sample_measure(SamplingMeasure.mu(builtin("disc")), builtin("disc"), 50, rng)
        assert s.measure == "mu" and np.all(s.weights == 1)

    def test_optimal_weights_average_one(self, rng):
        D = builtin("square")
        s = SamplingMeasure.optimal(exact_ev("square", 1), D, rng).sample(100_000, rng)
        assert s.weights.mean() == pytest.approx(1.0, abs=0.01)
        assert np.all(D.contains(s.points))

    def test_optimal_second_moment(self, rng):
        """E_sigma[x1^2] for density (1 + 3x1^2 + 3x2^2)/3 on the square equals 19/45."""
        s = SamplingMeasure.optimal(exact_ev("square", 1), builtin("square"), rng).sample(100_000, rng)
        v = s.points[:, 0] ** 2
        assert abs(v.mean() - 19 / 45) <= 4 * v.std() / math.sqrt(len(v))

    def test_disc_boundary_annulus(self, rng):
        D = builtin("disc")
        ev = exact_ev("disc", 15)
        s = SamplingMeasure.optimal(ev, D, rng).sample(10_000, rng)
        r = np.linalg.norm(s.points, axis=1)
        frac = np.mean(r >= 0.9 * DISC_RADIUS)
        mu_frac = 1 - 0.81
        assert frac >= 2 * mu_frac
        # quadrature oracle: fraction of int k_n over the annulus
        q = sample_uniform(D, 1_000_000, rng)
        kq = ev(q)
        oracle = np.sum(kq[np.linalg.norm(q, axis=1) >= 0.9 * DISC_RADIUS]) / np.sum(kq)
        assert abs(frac - oracle) <= 4 * math.sqrt(oracle * (1 - oracle) / 10_000)

    def test_envelope_violation_repaired(self, rng):
        D = builtin("square")
        m = SamplingMeasure.optimal(exact_ev("square", 2), D, rng)
        m.envelope = type(m.envelope)(m.envelope.lo, m.envelope.width, m.envelope.shape, m.envelope.values / 8)
        before = m.envelope.values.copy()
        s = m.sample(20_000, rng)
        assert m.violations >= 1
        assert np.all(m.envelope.values >= before)
        assert np.all(m.ratio(s.points) <= m.envelope.values[m.envelope.cell_of(s.points)])

    def test_rejection_generic_density(self, rng):
        D = builtin("disc")
        ratio = lambda x: 1 + x[:, 0]  # noqa: E731
        env = build_envelope(ratio, D, rng, 2000)
        pts, r, _, _ = rejection_sample(ratio, env, D, 50_000, rng)
        # E[x1] = E_mu[x1 (1 + x1)] / E_mu[1 + x1] = E_mu[x1^2] = 1/(2 pi)
        assert abs(pts[:, 0].mean() - 1 / (2 * math.pi)) <= 4 * pts[:, 0].std() / math.sqrt(len(pts))
        assert np.allclose(r, ratio(pts))

    def test_bad_counts(self, rng):
        m = SamplingMeasure.optimal(exact_ev("square", 1), builtin("square"), rng)
        with pytest.raises(ValueError):
            m.sample(0, rng)

    def test_copy(self, rng):
        m = SamplingMeasure.optimal(exact_ev("square", 1), builtin("square"), rng)
        c = m.copy()
        assert c.envelope is m.envelope and c._lock is not m._lock

    def test_kinds(self):
        with pytest.raises(ValueError):
            SamplingMeasure("optimal", builtin("disc"))
        with pytest.raises(ValueError):
            SamplingMeasure("other", builtin("disc"))

    def test_perturbed_framing(self, rng):
        """Under ||G_M - I|| <= 1/2 the offline estimate frames k_n between 2/3 and 2."""
        D = builtin("disc")
        space = PolynomialSpace.for_domain(D, 5)
        off = algorithm1_offline(space, D, 5000, rng)
        assert off.diagnostics.deviation <= 0.5
        ev = exact_ev("disc", 5)
        x = sample_uniform(D, 10_000, rng)
        ratio = off.evaluator(x) / ev(x)
        assert ratio.min() >= 2 / 3 and ratio.max() <= 2

    def test_perturbed_measure_gramian(self, rng):
        D = builtin("cusp")
        space = PolynomialSpace.for_domain(D, 5)
        off = algorithm1_offline(space, D, 20_000, rng)
        m = off.measure(D, rng, normalize=True)
        s = m.sample(2000, rng)
        _, dev, _ = gramian(s, orthonormalize_exact(space, D))
        assert dev <= 0.5


def test_heatmap():
    D = builtin("disc")
    X1, X2, V = heatmap(exact_ev("disc", 3), D, 50)
    assert V.shape == (50, 50)
    inside = D.contains(np.column_stack([X1.ravel(), X2.ravel()])).reshape(V.shape)
    assert np.array_equal(np.isfinite(V), inside)
    assert np.nanmin(V) > 0
