import math

import numpy as np
import pytest

from christoffel_wls.algorithms import (
    EmpiricalMDiverged,
    HierarchicalSampleState,
    LevelSchedule,
    ScheduleError,
    algorithm1_offline,
    algorithm2_multilevel,
    algorithm3_hierarchical,
    empirical_M,
    split_budget,
    total_degree_dims,
)
from christoffel_wls.bounds import GAMMA, c_delta, hierarchical_budget, sufficient_M
from christoffel_wls.christoffel import ChristoffelEvaluator
from christoffel_wls.geometry import builtin, sample_uniform
from christoffel_wls.least_squares import gramian
from christoffel_wls.polyspace import PolynomialSpace, RankDeficientError


def space(name, degree):
    return PolynomialSpace.for_domain(builtin(name), degree)


class TestAlgorithm1:
    def test_single_point_constant(self, rng):
        res = algorithm1_offline(space("disc", 0), builtin("disc"), 1, rng)
        assert res.n == 1 and res.M == 1
        assert res.basis(np.array([[0.1, -0.2], [0.3, 0.0]])) == pytest.approx(np.ones((2, 1)))
        assert res.diagnostics.deviation == pytest.approx(0.0, abs=1e-12)

    def test_too_few_points(self, rng):
        with pytest.raises(RankDeficientError):
            algorithm1_offline(space("square", 2), builtin("square"), 5, rng)

    def test_large_M_is_near_exact(self, rng):
        res = algorithm1_offline(space("square", 1), builtin("square"), 100_000, rng)
        assert res.diagnostics.deviation <= 0.02
        assert np.all(np.triu(res.basis.transform, 1) == 0)

    def test_metadata(self, rng):
        res = algorithm1_offline(space("cusp", 4), builtin("cusp"), 500, rng)
        meta = res.metadata()
        assert meta["n"] == 15 and meta["M"] == 500
        assert meta["kappa_G"] == pytest.approx(res.diagnostics.condition)

    def test_reproducible(self):
        D = builtin("corner_polygon")
        a = algorithm1_offline(space("corner_polygon", 5), D, 800, np.random.default_rng(3))
        b = algorithm1_offline(space("corner_polygon", 5), D, 800, np.random.default_rng(3))
        assert np.array_equal(a.basis.transform, b.basis.transform) and a.points_id == b.points_id

    def test_sufficient_M_disc(self, rng):
        D = builtin("disc")
        n = 66
        M = sufficient_M(n, 3 * n**1.5, 0.01)
        for _ in range(3):
            res = algorithm1_offline(space("disc", 10), D, M, rng)
            assert res.diagnostics.deviation <= 0.5


class TestEmpiricalM:
    def test_constant_space(self, rng):
        M, res = empirical_M(space("disc", 0), builtin("disc"), rng=rng)
        assert M == 1 and res.info["kappa_T"] == pytest.approx(1.0)

    def test_square_condition(self, rng):
        M, res = empirical_M(space("square", 5), builtin("square"), 3.0, rng=rng)
        assert res.diagnostics.condition <= 9.0
        assert res.info["history"][-1][0] == M
        assert all(k > 3.0 for _, k in res.info["history"][:-1])

    def test_cap(self, rng):
        with pytest.raises(EmpiricalMDiverged):
            empirical_M(space("square", 6), builtin("square"), 1.01, rng=rng, cap=200)

    def test_arguments(self, rng):
        with pytest.raises(ValueError):
            empirical_M(space("square", 1), builtin("square"), 1.0, rng=rng)
        with pytest.raises(ValueError):
            empirical_M(space("square", 1), builtin("square"), growth=1.0, rng=rng)


class TestSchedule:
    def test_split(self):
        assert split_budget(0.1, 4, 2) == pytest.approx(0.025)
        total = sum(split_budget(1.0, None, p) for p in range(1, 100_000))
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_multilevel_preset(self):
        s = LevelSchedule.multilevel((3, 6, 10), 0.03)
        assert s.eps == pytest.approx((0.01, 0.01, 0.01))
        assert s.offline == tuple(math.ceil(6 * GAMMA * n * math.log(200 * n)) for n in (3, 6, 10))

    def test_hierarchical_preset(self):
        s = LevelSchedule.hierarchical((15, 21), 0.01, 0.25)
        assert s.deltas == pytest.approx((0.125, 0.125))
        assert s.offline[0] == math.ceil(4 * c_delta(0.125) * 15 * math.log(2 * 15 / 0.005))
        assert s.online == tuple(hierarchical_budget(n, 0.25, 0.01) for n in (15, 21))
        s.check_monotone()

    def test_round_trip(self):
        s = LevelSchedule.hierarchical((6, 10, 15), 0.01, 0.2, split="harmonic")
        assert LevelSchedule.from_dict(s.to_dict()) == s
        assert LevelSchedule.from_dict({"preset": "multilevel", "dims": [3, 6], "eps": 0.01}) == \
            LevelSchedule.multilevel((3, 6), 0.01)

    @pytest.mark.parametrize("kwargs", [
        dict(dims=(), offline=(), eps=()),
        dict(dims=(3, 3), offline=(10, 10), eps=(0.1, 0.1)),
        dict(dims=(3,), offline=(2,), eps=(0.1,)),
        dict(dims=(3,), offline=(10,), eps=(1.0,)),
        dict(dims=(3, 6), offline=(10, 20), eps=(0.5, 0.5)),
        dict(dims=(3,), offline=(10,), eps=(0.1,), deltas=(0.6,)),
        dict(dims=(3, 6), offline=(10, 20), eps=(0.1, 0.1), online=(10, 8)),
        dict(dims=(3,), offline=(10,), eps=(0.1,), online=(2,)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ScheduleError):
            LevelSchedule(**kwargs)

    def test_unknown_preset(self):
        with pytest.raises(ScheduleError):
            LevelSchedule.from_dict({"preset": "nope"})

    def test_monotonicity(self):
        s = LevelSchedule((3, 6), (30, 60), (0.1, 0.1), online=(30, 40))
        with pytest.raises(ScheduleError, match="monotonicity"):
            s.check_monotone()
        with pytest.raises(ScheduleError):
            LevelSchedule((3,), (30,), (0.1,)).check_monotone()

    def test_total_degree_dims(self):
        assert total_degree_dims(2, range(4)) == (1, 3, 6, 10)
        assert total_degree_dims(3, (2,)) == (10,)


class TestAlgorithm2:
    def test_single_level_is_algorithm1(self):
        D = builtin("cusp")
        s = LevelSchedule((15,), (400,), (0.01,))
        a = algorithm2_multilevel(s, D, np.random.default_rng(5))
        b = algorithm1_offline(space("cusp", 4), D, 400, np.random.default_rng(5))
        assert np.array_equal(a.basis.transform, b.basis.transform)
        assert a.levels[0]["alpha_prev"] == 1.0

    def test_levels_recorded(self, rng):
        s = LevelSchedule.multilevel(total_degree_dims(2, (1, 2, 3)), 0.01)
        res = algorithm2_multilevel(s, builtin("corner_polygon"), rng, alpha_samples=20_000)
        assert [r["n"] for r in res.levels] == [3, 6, 10]
        assert res.M == sum(s.offline)
        assert all(r["alpha_prev"] == pytest.approx(1.0, abs=0.05) for r in res.levels[1:])

    @pytest.mark.slow
    def test_framing_on_cusp(self, rng):
        s = LevelSchedule.multilevel(total_degree_dims(2, range(1, 7)), 0.05)
        for _ in range(3):
            res = algorithm2_multilevel(s, builtin("cusp"), rng, alpha_samples=20_000)
            assert res.diagnostics.condition <= s.kappa**2
            assert all(r["kappa_G"] <= s.kappa**2 for r in res.levels)


class TestAlgorithm3:
    def test_single_level_weights(self, rng):
        D = builtin("disc")
        s = LevelSchedule.hierarchical((10,), 0.01, 0.25)
        state = algorithm3_hierarchical(s, D, rng, alpha_samples=50_000)
        smp = state.sample()
        k = ChristoffelEvaluator(state.bases[0])(smp.points)
        assert np.allclose(smp.weights, 10 / (state.alphas[0] * k), rtol=1e-12)
        assert state.alphas[0] == pytest.approx(1.0, abs=0.05)
        assert smp.m == s.online[0]

    def test_nested_and_tagged(self, rng):
        D = builtin("square")
        s = LevelSchedule.hierarchical((6, 10), 0.01, 0.25)
        state = algorithm3_hierarchical(s, D, rng, alpha_samples=20_000)
        one, two = state.sample(1), state.sample(2)
        assert np.array_equal(two.points[: one.m], one.points)
        assert np.array_equal(np.bincount(two.levels)[1:], [s.online[0], s.online[1] - s.online[0]])
        for b in state.bases:
            assert np.all(np.triu(b.transform, 1) == 0)

    def test_extending_state(self, rng):
        D = builtin("square")
        s = LevelSchedule.hierarchical((6, 10), 0.01, 0.25)
        first = LevelSchedule(s.dims[:1], s.offline[:1], s.eps[:1], s.kappa, s.deltas[:1], s.online[:1])
        state = algorithm3_hierarchical(first, D, rng, alpha_samples=20_000)
        kept = state.points.copy()
        algorithm3_hierarchical(s, D, rng, state=state, alpha_samples=20_000)
        assert state.q == 2 and np.array_equal(state.points[: len(kept)], kept)

    def test_mixture_normalization(self, rng):
        D = builtin("disc")
        s = LevelSchedule.hierarchical((6, 10), 0.01, 0.25)
        state = algorithm3_hierarchical(s, D, rng, alpha_samples=50_000)
        probes = sample_uniform(D, 200_000, rng)
        for p in (1, 2):
            assert state.density(p, probes).mean() == pytest.approx(1.0, abs=0.02)

    def test_non_monotone_schedule(self, rng):
        bad = LevelSchedule((6, 10), (200, 400), (0.01, 0.01), deltas=(0.1, 0.1), online=(200, 250))
        with pytest.raises(ScheduleError, match="monotonicity"):
            algorithm3_hierarchical(bad, builtin("disc"), rng)

    def test_needs_online_counts(self, rng):
        with pytest.raises(ScheduleError):
            algorithm3_hierarchical(LevelSchedule((3,), (30,), (0.1,)), builtin("disc"), rng)

    def test_gramian_on_last_level(self, rng):
        from christoffel_wls.polyspace import orthonormalize_exact

        D = builtin("corner_polygon")
        s = LevelSchedule.hierarchical((6, 10), 0.01, 0.25)
        state = algorithm3_hierarchical(s, D, rng, alpha_samples=50_000)
        exact = orthonormalize_exact(space("corner_polygon", 3), D)
        _, dev, _ = gramian(state.sample(), exact)
        assert dev <= 0.5

    def test_empty_state(self):
        st = HierarchicalSampleState(builtin("disc"))
        assert st.q == 0 and st.m == 0
