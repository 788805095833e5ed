import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from christoffel_wls.geometry import builtin, sample_uniform
from christoffel_wls.polyspace import (
    DiscreteInnerProduct,
    Exact,
    OrthonormalBasis,
    PolynomialSpace,
    RankDeficientError,
    evaluate_basis,
    evaluate_monomials,
    exact_gram_residual,
    identity_basis,
    orthonormalize_discrete,
    orthonormalize_exact,
    space_dimension,
)


class TestIndexSets:
    def test_dimensions(self):
        assert space_dimension(2, 15) == 136
        assert space_dimension(2, 20) == 231
        assert space_dimension(5, 0) == 1
        assert [space_dimension(2, k) for k in range(4)] == [1, 3, 6, 10]

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            space_dimension(0, 3)
        with pytest.raises(ValueError):
            space_dimension(2, -1)

    def test_completion_order(self):
        sp = PolynomialSpace.total_degree(2, 3)
        assert sp.indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))

    @pytest.mark.parametrize("d,degree", [(1, 6), (2, 8), (3, 5)])
    def test_prefixes_downward_closed(self, d, degree):
        sp = PolynomialSpace.total_degree(d, degree)
        assert sp.n == math.comb(d + degree, degree)
        for k in range(1, sp.n + 1):
            prefix = set(sp.indices[:k])
            for nu in prefix:
                for i, a in enumerate(nu):
                    if a:
                        assert nu[:i] + (a - 1,) + nu[i + 1:] in prefix

    def test_partial_space(self):
        sp = PolynomialSpace.total_degree(2, 4, 12)
        assert sp.n == 12 and sp.max_degree == 4


class TestMonomials:
    def test_examples(self):
        sp1 = PolynomialSpace.total_degree(2, 1)
        assert evaluate_monomials(sp1, [0.5, -1.0])[0] == pytest.approx([1, 0.5, -1])
        sp2 = PolynomialSpace.total_degree(2, 2)
        assert evaluate_monomials(sp2, [0.0, 0.0])[0] == pytest.approx([1, 0, 0, 0, 0, 0])
        assert evaluate_monomials(sp2, [2.0, 3.0])[0] == pytest.approx([1, 2, 3, 4, 6, 9])

    def test_direct_exponentiation(self, rng):
        sp = PolynomialSpace.total_degree(3, 5)
        x = rng.uniform(-1, 1, size=(20, 3))
        direct = np.prod(x[:, None, :] ** sp.index_array[None, :, :], axis=2)
        assert np.allclose(evaluate_monomials(sp, x), direct, rtol=1e-14, atol=0)


def _legendre_oracle(k, t):
    """Normalized Legendre polynomial from numpy's coefficient series."""
    c = np.zeros(k + 1)
    c[k] = 1
    return math.sqrt(2 * k + 1) * np.polynomial.legendre.legval(t, c)


class TestExactBases:
    @pytest.mark.parametrize("name", ["disc", "corner_polygon", "cusp", "square"])
    def test_constant(self, name):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin(name), 0), name)
        assert b(np.array([[0.1, -0.2], [0.3, 0.0]]))[:, 0] == pytest.approx([1, 1], abs=1e-15)

    def test_square_legendre(self, rng):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("square"), 1), "square")
        x = rng.uniform(-1, 1, size=(50, 2))
        v = b(x)
        assert np.allclose(v[:, 1], math.sqrt(3) * x[:, 0], atol=1e-14)
        assert np.allclose(v[:, 2], math.sqrt(3) * x[:, 1], atol=1e-14)
        assert evaluate_basis(b, [1.0, 1.0])[0] == pytest.approx([1, math.sqrt(3), math.sqrt(3)], abs=1e-14)

    def test_square_matches_tensor_legendre(self, rng):
        sp = PolynomialSpace.for_domain(builtin("square"), 6)
        b = orthonormalize_exact(sp, "square")
        x = rng.uniform(-1, 1, size=(30, 2))
        # on the square the orthonormal basis is the tensor Legendre basis, up to sign
        oracle = np.column_stack([_legendre_oracle(a, x[:, 0]) * _legendre_oracle(c, x[:, 1]) for a, c in sp.indices])
        assert np.allclose(np.abs(b(x)), np.abs(oracle), atol=1e-12)

    def test_disc_linear_terms(self):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("disc"), 1), "disc")
        assert b([0.0, 0.0])[0] == pytest.approx([1, 0, 0], abs=1e-15)
        # E[x1^2] = 1/(2 pi) so L_2 = sqrt(2 pi) x1
        assert b([0.3, 0.0])[0, 1] == pytest.approx(math.sqrt(2 * math.pi) * 0.3, rel=1e-14)

    def test_lower_triangular_positive(self):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("cusp"), 8), "cusp")
        assert not np.any(np.triu(b.transform, 1))
        assert np.all(np.diag(b.transform) > 0)
        assert isinstance(b.provenance, Exact)

    @pytest.mark.parametrize("name", ["disc", "corner_polygon", "cusp"])
    def test_residual_degree_15(self, name):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin(name), 15), name)
        assert np.abs(exact_gram_residual(b, name)).max() <= 1e-10

    def test_double_precision_quadrature_check(self):
        """Independent check of orthonormality with tensor Gauss-Legendre on the square."""
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("square"), 10), "square")
        t, w = leggauss(12)
        X = np.array([(a, c) for a in t for c in t])
        W = np.array([wa * wc for wa in w for wc in w]) / 4
        B = b(X)
        assert np.abs(B.T @ (B * W[:, None]) - np.eye(b.n)).max() <= 1e-12

    def test_triangularity_of_evaluation(self, rng):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("disc"), 6), "disc")
        x = sample_uniform(builtin("disc"), 40, rng)
        full = b(x)
        for k in (1, 3, 10, 21):
            assert np.allclose(b.truncate(k)(x), full[:, :k], rtol=0, atol=1e-13)

    def test_json_round_trip(self):
        b = orthonormalize_exact(PolynomialSpace.for_domain(builtin("cusp"), 4), "cusp")
        c = OrthonormalBasis.from_json(b.to_json())
        assert np.array_equal(c.transform, b.transform)
        assert np.array_equal(c.transform_lo, b.transform_lo)
        assert c.provenance == b.provenance and c.space == b.space

    def test_no_oracle(self):
        from christoffel_wls.geometry import custom_domain

        D = custom_domain(lambda x: np.ones(len(x), dtype=bool), [[0, 1], [0, 1]], area_samples=1000)
        with pytest.raises(ValueError, match="moment oracle"):
            orthonormalize_exact(PolynomialSpace.for_domain(D, 1), D)


class TestDiscrete:
    def test_identity_basis_is_raw_legendre(self, rng):
        sp = PolynomialSpace.total_degree(2, 3)
        x = rng.uniform(-1, 1, size=(7, 2))
        assert np.allclose(identity_basis(sp)(x), sp.evaluate(x))

    def test_gram_residual(self, rng):
        D = builtin("cusp")
        sp = PolynomialSpace.for_domain(D, 8)
        ip = DiscreteInnerProduct(sample_uniform(D, 2000, rng), rng.uniform(0.5, 2, 2000))
        b = orthonormalize_discrete(sp, ip)
        assert np.abs(ip.gram(b(ip.points)) - np.eye(sp.n)).max() <= 1e-10
        assert not np.any(np.triu(b.transform, 1))

    def test_single_function(self, rng):
        sp = PolynomialSpace.total_degree(2, 0)
        ip = DiscreteInnerProduct(rng.uniform(-1, 1, (10, 2)))
        assert orthonormalize_discrete(sp, ip)(np.zeros((1, 2)))[0, 0] == pytest.approx(1.0)

    def test_quadrature_matches_exact(self):
        D = builtin("square")
        sp = PolynomialSpace.for_domain(D, 1)
        t, w = leggauss(3)
        X = np.array([(a, c) for a in t for c in t])
        W = np.array([wa * wc for wa in w for wc in w]) / 4 * len(X)
        disc = orthonormalize_discrete(sp, DiscreteInnerProduct(X, W))
        exact = orthonormalize_exact(sp, D)
        assert np.allclose(disc.transform, exact.transform, atol=1e-10)

    def test_permutation_invariance(self, rng):
        D = builtin("disc")
        sp = PolynomialSpace.for_domain(D, 6)
        pts = sample_uniform(D, 300, rng)
        a = orthonormalize_discrete(sp, DiscreteInnerProduct(pts))
        b = orthonormalize_discrete(sp, DiscreteInnerProduct(pts[rng.permutation(len(pts))]))
        assert np.abs(a.transform - b.transform).max() <= 1e-12 * np.abs(a.transform).max()

    def test_m_equals_n(self, rng):
        sp = PolynomialSpace.total_degree(2, 2)
        b = orthonormalize_discrete(sp, DiscreteInnerProduct(rng.uniform(-1, 1, (6, 2))))
        assert b.n == 6

    def test_rank_deficient(self):
        sp = PolynomialSpace.total_degree(2, 2)
        line = np.column_stack([np.linspace(-1, 1, 20), np.zeros(20)])
        with pytest.raises(RankDeficientError, match="increase M"):
            orthonormalize_discrete(sp, DiscreteInnerProduct(line))
        with pytest.raises(RankDeficientError):
            orthonormalize_discrete(sp, DiscreteInnerProduct(np.zeros((3, 2))))

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            DiscreteInnerProduct(np.zeros((3, 2)), np.array([1.0, -1.0, 1.0]))
