"""The ten acceptance criteria, each as a function returning a :class:`CriterionResult`.

Runtime limits are part of a criterion where one is stated.  Every
criterion seeds its own generators from ``seed``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algorithms import LevelSchedule, algorithm3_hierarchical, total_degree_dims
from .bounds import ball_boundary_k, online_budget, sufficient_M
from .christoffel import ChristoffelEvaluator, SamplingMeasure, integral_check, sampled_sup
from .geometry import DISC_RADIUS, builtin, sample_uniform
from .least_squares import fit, gramian, gramian_matrix
from .polyspace import PolynomialSpace, exact_gram_residual, orthonormalize_exact, space_dimension

SECTION_DOMAINS = ("disc", "corner_polygon", "cusp")
ALL_DOMAINS = ("disc", "corner_polygon", "cusp", "square")


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    tolerance: str
    detail: str
    seconds: float
    limit: float | None = None

    @property
    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        limit = f" (limit {self.limit:.0f} s)" if self.limit else ""
        return f"[{status}] criterion {self.number}: {self.title}: {self.detail}; {self.seconds:.1f} s{limit}"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "tolerance": self.tolerance,
                "detail": self.detail, "seconds": self.seconds, "limit": self.limit, "line": self.line}


def _exact(domain, degree: int):
    D = builtin(domain) if isinstance(domain, str) else domain
    return orthonormalize_exact(PolynomialSpace.for_domain(D, degree), D)


def _rng(seed: int, number: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(number, *key)))


def _timed(number: int, title: str, tolerance: str, limit: float | None):
    def wrap(fn: Callable[..., tuple[bool, str]]):
        def run(seed: int = 0, threads: int = 1) -> CriterionResult:
            t0 = time.perf_counter()
            ok, detail = fn(seed, threads)
            dt = time.perf_counter() - t0
            if limit is not None and dt > limit:
                ok = False
                detail += f"; runtime {dt:.1f} s exceeds {limit:.0f} s"
            return CriterionResult(number, title, bool(ok), tolerance, detail, dt, limit)

        run.number = number
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


@_timed(1, "exact orthonormality", "max |T G T^T - I| <= 1e-10 for l <= 15", 30.0)
def criterion_1(seed, threads):
    worst = {}
    for name in SECTION_DOMAINS:
        worst[name] = max(float(np.abs(exact_gram_residual(_exact(name, k), name)).max()) for k in range(16))
    ok = max(worst.values()) <= 1e-10
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def disc_boundary_points(count: int = 20) -> np.ndarray:
    t = 2 * np.pi * (np.arange(count) + 0.5) / count
    return DISC_RADIUS * np.column_stack([np.cos(t), np.sin(t)])


def stated_disc_boundary_value(degree: int) -> int:
    """``C(l+3, l) + C(l, l-1)``, the closed form the criterion asserts for the disc."""
    return math.comb(degree + 3, degree) + (math.comb(degree, degree - 1) if degree else 0)


@_timed(2, "disc boundary closed form", "relative 1e-6 against C(l+3,l)+C(l,l-1), l = 1..10", 10.0)
def criterion_2(seed, threads):
    pts = disc_boundary_points(20)
    rel_stated, rel_exact = [], []
    for k in range(1, 11):
        vals = ChristoffelEvaluator(_exact("disc", k))(pts)
        rel_stated.append(float(np.max(np.abs(vals / stated_disc_boundary_value(k) - 1))))
        rel_exact.append(float(np.max(np.abs(vals / ball_boundary_k(2, k) - 1))))
    bad = [k for k, r in zip(range(1, 11), rel_stated) if r > 1e-6]
    ok = not bad
    detail = (f"max rel err vs asserted form {max(rel_stated):.2e} (fails at l = {bad}); "
              f"vs C(l+3,l)+C(l+2,l-1) {max(rel_exact):.1e}")
    return ok, detail


@_timed(3, "trace identity", "|int k_n dmu - n| <= 1e-8 for all built-ins, l <= 15", None)
def criterion_3(seed, threads):
    worst = {}
    for name in ALL_DOMAINS:
        D = builtin(name)
        worst[name] = max(abs(integral_check(ChristoffelEvaluator(_exact(D, k)), D) - space_dimension(2, k))
                          for k in range(16))
    return max(worst.values()) <= 1e-8, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


@_timed(4, "square bound", "sampled sup k_n <= n^2 for l <= 12; k(1,1) = 7 +- 1e-10 at l = 1", None)
def criterion_4(seed, threads):
    D = builtin("square")
    rng = _rng(seed, 4)
    pts = np.concatenate([sample_uniform(D, 100_000, rng), D.extreme_points()])
    ratios = []
    for k in range(13):
        ev = ChristoffelEvaluator(_exact(D, k))
        ratios.append(float(ev(pts).max()) / ev.n**2)
    corner = float(ChristoffelEvaluator(_exact(D, 1))(np.array([[1.0, 1.0]]))[0])
    ok = max(ratios) <= 1.0 and abs(corner - 7.0) <= 1e-10
    return ok, f"max sup/n^2 = {max(ratios):.3f}, k(1,1) - 7 = {corner - 7:.1e}"


@_timed(5, "cusp growth rate", "log-log slope of K_n vs n over l = 4..14 in [2.5, 3.5]", 120.0)
def criterion_5(seed, threads):
    D = builtin("cusp")
    rng = _rng(seed, 5)
    ns, Ks = [], []
    for k in range(4, 15):
        ev = ChristoffelEvaluator(_exact(D, k))
        ns.append(ev.n)
        Ks.append(sampled_sup(ev, D, 100_000, rng))
    slope = float(np.polyfit(np.log(ns), np.log(Ks), 1)[0])
    return 2.5 <= slope <= 3.5, f"slope {slope:.3f}"


@_timed(6, "online concentration", ">= 97/100 trials with ||G - I|| <= 1/2 for n in 21, 66, 136", 300.0)
def criterion_6(seed, threads):
    worst = 100
    parts = []
    for di, name in enumerate(ALL_DOMAINS):
        D = builtin(name)
        for k in (5, 10, 15):
            basis = _exact(D, k)
            n = basis.n
            m = online_budget(n, 3.0, 0.01)
            measure = SamplingMeasure.optimal(ChristoffelEvaluator(basis), D, _rng(seed, 6, di, k))
            good = 0
            for t in range(100):
                _, dev, _ = gramian(measure.sample(m, _rng(seed, 6, di, k, t)), basis)
                good += dev <= 0.5
            worst = min(worst, good)
            parts.append(f"{name}/{n}:{good}")
    return worst >= 97, "good trials " + " ".join(parts)


@_timed(7, "error vs budget", "sigma*, sigma~ mean <= 2e-4 at m = 3n; mu on cusp mean >= 1e-3", 600.0)
def criterion_7(seed, threads):
    from .expcli import ExperimentConfig, run_experiment

    ok = True
    parts = []
    for name in SECTION_DOMAINS:
        measures = ("optimal", "perturbed", "mu") if name == "cusp" else ("optimal", "perturbed")
        cfg = ExperimentConfig("error_budget", domain=name, degrees=(15,), grid=(3.0,), trials=25, seed=seed,
                               measures=measures, out=None, threads=threads)
        for cell in run_experiment(cfg).cells:
            mean = cell["mean_error_l2sq"]
            if cell["measure"] == "mu":
                ok &= mean >= 1e-3
            else:
                ok &= mean <= 2e-4
            parts.append(f"{name}/{cell['measure']} {mean:.3e}")
    return ok, "mean errors " + ", ".join(parts)


@_timed(8, "empirical M", "kappa(G) <= 9 in >= 90/100 trials and M_emp <= M_suf/10 (disc, l = 10)", None)
def criterion_8(seed, threads):
    from .expcli import ExperimentConfig, run_experiment

    cfg = ExperimentConfig("empirical_phase", domain="disc", degrees=(10,), trials=100, seed=seed,
                           c_star=3.0, out=None, threads=threads)
    rec = run_experiment(cfg)
    cell = rec.cells[0]
    n = cell["n"]
    m_suf = sufficient_M(n, 3.0 * n**1.5, 0.01)
    good = cell["trials"] - cell["kappa_G_above_c_star_sq"] - cell["errors"]
    ok = good >= 90 and cell["max_M_emp"] <= m_suf / 10
    return ok, f"{good}/100 with kappa(G) <= 9, max M_emp {cell['max_M_emp']} vs M_suf/10 = {m_suf / 10:.0f}"


HIERARCHY_DEGREES = (4, 5)


def _two_level(delta: float = 0.25, eps: float = 0.01):
    D = builtin("disc")
    schedule = LevelSchedule.hierarchical(total_degree_dims(2, HIERARCHY_DEGREES), eps, delta)
    return D, schedule


def mixture_residual(state, probes: np.ndarray) -> float:
    """``max |w(x) sum_p (m_p - m_{p-1}) rho_p(x) / m - 1|`` with densities rebuilt from the bases."""
    total = np.zeros(len(probes))
    for p in range(1, state.q + 1):
        ev = ChristoffelEvaluator(state.bases[p - 1])
        m_p, n_p = state.counts[p - 1], state.dims[p - 1]
        bracket = m_p / n_p * ev(probes)
        m_prev = 0
        if p > 1:
            m_prev, n_prev = state.counts[p - 2], state.dims[p - 2]
            bracket -= m_prev / n_prev * ev.truncate(n_prev)(probes)
        total += state.alphas[p - 1] * bracket  # (m_p - m_{p-1}) * d rho_p / d mu
    return float(np.max(np.abs(state.weight(probes) * total / state.m - 1)))


@_timed(9, "hierarchical sampling identities",
        "mixture identity 1e-8; rho_p >= -1e-10; nested and reproducible; framing >= 95/100", None)
def criterion_9(seed, threads):
    D, schedule = _two_level()
    probes = sample_uniform(D, 10_000, _rng(seed, 9, 0))

    rng = _rng(seed, 9, 1)
    first = LevelSchedule(schedule.dims[:1], schedule.offline[:1], schedule.eps[:1], schedule.kappa,
                          schedule.deltas[:1], schedule.online[:1])
    state = algorithm3_hierarchical(first, D, rng)
    level1 = state.points.copy()
    state = algorithm3_hierarchical(schedule, D, rng, state=state)
    nested = np.array_equal(state.points[: len(level1)], level1) and state.q == 2
    again = algorithm3_hierarchical(schedule, D, _rng(seed, 9, 1))
    reproducible = again.points.tobytes() == state.points.tobytes()
    residual = mixture_residual(state, probes)
    min_density = min(float(state.density(p, probes).min()) for p in (1, 2))

    bases = [_exact(D, k) for k in HIERARCHY_DEGREES]
    good = 0
    for t in range(100):
        st = algorithm3_hierarchical(schedule, D, _rng(seed, 9, 2, t))
        good += all(gramian(st.sample(q), bases[q - 1])[1] <= 0.5 for q in (1, 2))

    ok = residual <= 1e-8 and min_density >= -1e-10 and nested and reproducible and good >= 95
    detail = (f"mixture residual {residual:.1e}, min density {min_density:.2e}, nested {nested}, "
              f"reproducible {reproducible}, framing {good}/100 (dims {schedule.dims}, m {schedule.online})")
    return ok, detail


@_timed(10, "least-squares core", "reproduction 1e-10; weight scaling 1e-12; norm framing by ||G - I||", None)
def criterion_10(seed, threads):
    D = builtin("disc")
    basis = _exact(D, 10)
    n = basis.n
    rng = _rng(seed, 10)
    sample = SamplingMeasure.optimal(ChristoffelEvaluator(basis), D, rng).sample(4 * n, rng)
    coef = rng.standard_normal(n)
    values = basis(sample.points) @ coef
    repro = float(np.max(np.abs(fit(sample, values, basis).coefficients - coef)))

    y = np.sin(3 * sample.points[:, 0]) * np.exp(sample.points[:, 1])
    ref = fit(sample, y, basis).coefficients
    scale = max(float(np.max(np.abs(fit(sample.scaled(s), y, basis).coefficients - ref)))
                for s in (1e-3, 7.5, 1e4)) / float(np.max(np.abs(ref)))

    G = gramian_matrix(sample, basis)
    delta = float(np.max(np.abs(np.linalg.eigvalsh(G) - 1)))
    B = basis(sample.points)
    violations = 0
    for _ in range(100):
        c = rng.standard_normal(n)
        v = B @ c
        ratio = float(np.mean(sample.weights * v * v)) / float(c @ c)
        violations += not (1 - delta - 1e-12 <= ratio <= 1 + delta + 1e-12)
    ok = repro <= 1e-10 and scale <= 1e-12 and violations == 0
    return ok, f"reproduction {repro:.1e}, scaling {scale:.1e}, framing violations {violations}/100 (delta {delta:.2f})"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_all(seed: int = 0, only=None, threads: int = 1, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        res = crit(seed, threads)
        if echo is not None:
            echo(res.line)
        out.append(res)
    return out
