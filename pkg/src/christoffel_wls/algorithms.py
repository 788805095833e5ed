"""Offline construction of near-optimal sampling measures and hierarchical sampling.

* :func:`algorithm1_offline` orthonormalizes against ``M`` mu-samples.
* :func:`empirical_M` grows ``M`` until an independent test Gramian is well
  conditioned.
* :func:`algorithm2_multilevel` climbs a ladder of nested spaces, sampling
  each level from the previous level's perturbed measure.
* :func:`algorithm3_hierarchical` adds nested evaluation points level by
  level, drawn from mixture densities that keep the cumulative sample
  weighted-optimal at every level.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import GAMMA, c_delta, hierarchical_budget, sufficient_M  # noqa: F401  (re-exported)
from .christoffel import (
    ChristoffelEvaluator,
    SamplingMeasure,
    build_envelope,
    estimate_alpha,
    rejection_sample,
)
from .geometry import Domain, sample_uniform
from .least_squares import GramianDiagnostics, WeightedSample, spectral_diagnostics
from .polyspace import (
    DiscreteInnerProduct,
    OrthonormalBasis,
    PolynomialSpace,
    RankDeficientError,
    orthonormalize_discrete,
    orthonormalize_exact,
)

log = logging.getLogger(__name__)

M_CAP = 10_000_000
ALPHA_SAMPLES = 100_000


class EmpiricalMDiverged(RuntimeError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OfflineResult:
    """A discretely orthonormalized basis and how it was obtained.

    ``diagnostics`` holds the spectrum of the exact basis Gramian in the
    offline inner product when the domain has exact moments.
    """

    basis: OrthonormalBasis
    M: int
    points_id: str
    diagnostics: GramianDiagnostics | None = None
    levels: tuple[dict, ...] = ()
    info: dict = field(default_factory=dict)

    @property
    def evaluator(self) -> ChristoffelEvaluator:
        return ChristoffelEvaluator(self.basis)

    @property
    def n(self) -> int:
        return self.basis.n

    def measure(self, domain: Domain, rng: np.random.Generator, *, normalize: bool = False,
                alpha_samples: int = ALPHA_SAMPLES) -> SamplingMeasure:
        """The perturbed measure; ``normalize`` estimates alpha so the weights average to 1."""
        alpha = estimate_alpha(self.evaluator, domain, rng, alpha_samples)[0] if normalize else 1.0
        return SamplingMeasure.perturbed(self.evaluator, domain, rng, alpha)

    def metadata(self) -> dict:
        out = {"n": self.n, "M": self.M, "points_id": self.points_id, "levels": list(self.levels)}
        if self.diagnostics is not None:
            d = self.diagnostics
            out["kappa_G"] = d.condition
            out["deviation_G"] = d.deviation
        out.update(self.info)
        return out


def _exact_diagnostics(space: PolynomialSpace, domain: Domain, ip: DiscreteInnerProduct) -> GramianDiagnostics | None:
    if domain.moment_oracle is None:
        return None
    exact = orthonormalize_exact(space, domain)
    return spectral_diagnostics(ip.gram(exact(ip.points)))


def algorithm1_offline(space: PolynomialSpace, domain: Domain, M: int, rng: np.random.Generator,
                       *, diagnostics: bool = True) -> OfflineResult:
    """Orthonormalize ``space`` for ``<u, v>_M = (1/M) sum u(z_i) v(z_i)`` with ``z_i ~ mu``."""
    if M < space.n:
        raise RankDeficientError(M, space.n)
    t0 = time.perf_counter()
    ip = DiscreteInnerProduct(sample_uniform(domain, M, rng))
    basis = orthonormalize_discrete(space, ip)
    diag = _exact_diagnostics(space, domain, ip) if diagnostics else None
    return OfflineResult(basis, M, ip.id[0], diag, info={"seconds": time.perf_counter() - t0})


def empirical_M(space: PolynomialSpace, domain: Domain, c_star: float = 3.0, M0: int | None = None,
                growth: float = 1.5, rng: np.random.Generator | None = None, *, cap: int = M_CAP,
                diagnostics: bool = True) -> tuple[int, OfflineResult]:
    """Smallest ``M`` on the geometric grid with ``kappa(T) <= c_star``.

    At every ``M`` two independent mu-samples ``y`` and ``z`` are drawn; the
    basis orthonormal for ``y`` is tested in the ``z`` inner product.  The
    returned result is built on the final ``z``-sample.
    """
    if c_star <= 1 or growth <= 1:
        raise ValueError("need c_star > 1 and growth > 1")
    rng = np.random.default_rng() if rng is None else rng
    n = space.n
    M = max(M0 or n, n)
    history = []
    t0 = time.perf_counter()
    while True:
        if M > cap:
            raise EmpiricalMDiverged(f"empirical M search diverged (M > {cap})")
        y = DiscreteInnerProduct(sample_uniform(domain, M, rng))
        z = DiscreteInnerProduct(sample_uniform(domain, M, rng))
        try:
            by = orthonormalize_discrete(space, y)
            lam = np.linalg.eigvalsh(z.gram(by(z.points)))
            kappa = lam[-1] / lam[0] if lam[0] > 0 else math.inf
        except RankDeficientError:
            kappa = math.inf
        history.append((M, float(kappa)))
        if kappa <= c_star:
            try:
                basis = orthonormalize_discrete(space, z)
            except RankDeficientError:
                basis = None
            if basis is not None:
                break
        M = math.ceil(growth * M)
    diag = _exact_diagnostics(space, domain, z) if diagnostics else None
    info = {"kappa_T": history[-1][1], "history": history, "seconds": time.perf_counter() - t0}
    return M, OfflineResult(basis, M, z.id[0], diag, info=info)


# ---------------------------------------------------------------------------
# level schedules


def split_budget(total: float, q: int | None, p: int) -> float:
    """Level-``p`` share of ``total``: ``total / q``, or ``6 total / (pi^2 p^2)`` when q is open."""
    if q is not None:
        return total / q
    return 6.0 * total / (math.pi**2 * p**2)


@dataclass(frozen=True)
class LevelSchedule:
    """Nested dimensions ``n_1 < ... < n_q`` with per-level sample counts.

    ``offline`` holds ``M_p``; ``online`` holds the cumulative evaluation
    counts ``m_p`` (hierarchical sampling only).
    """

    dims: tuple[int, ...]
    offline: tuple[int, ...]
    eps: tuple[float, ...]
    kappa: float = 2.0
    deltas: tuple[float, ...] | None = None
    online: tuple[int, ...] | None = None

    def __post_init__(self):
        q = len(self.dims)
        if q == 0:
            raise ScheduleError("schedule needs at least one level")
        if any(b <= a for a, b in zip(self.dims, self.dims[1:])) or self.dims[0] < 1:
            raise ScheduleError("dimensions must be positive and strictly increasing")
        if len(self.offline) != q or len(self.eps) != q:
            raise ScheduleError("one offline count and one epsilon per level")
        if any(M < n for M, n in zip(self.offline, self.dims)):
            raise ScheduleError("each offline count must be at least the level dimension")
        if not all(0 < e < 1 for e in self.eps) or sum(self.eps) >= 1:
            raise ScheduleError("epsilon_p must lie in (0, 1) with sum below 1")
        if self.deltas is not None:
            if len(self.deltas) != q or not all(0 < d < 1 for d in self.deltas) or sum(self.deltas) >= 0.5:
                raise ScheduleError("delta_p must lie in (0, 1) with sum below 1/2")
        if self.online is not None:
            if len(self.online) != q or any(b <= a for a, b in zip(self.online, self.online[1:])):
                raise ScheduleError("online counts must be strictly increasing, one per level")
            if any(m < n for m, n in zip(self.online, self.dims)):
                raise ScheduleError("each online count must be at least the level dimension")

    @property
    def q(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return self.dims[-1]

    @property
    def epsilon(self) -> float:
        return float(sum(self.eps))

    def check_monotone(self) -> None:
        """Hierarchical sampling needs ``m_p / n_p`` non-decreasing."""
        if self.online is None:
            raise ScheduleError("schedule has no online counts")
        ratios = [m / n for m, n in zip(self.online, self.dims)]
        if any(b < a for a, b in zip(ratios, ratios[1:])):
            raise ScheduleError("schedule violates m_p/n_p monotonicity")

    @classmethod
    def multilevel(cls, dims, eps: float, kappa: float = 2.0, *, split: str = "uniform") -> "LevelSchedule":
        """``M_p = ceil(3 kappa gamma n_p ln(2 n_p / eps_p))``."""
        dims = tuple(int(n) for n in dims)
        q = len(dims) if split == "uniform" else None
        eps_p = tuple(split_budget(eps, q, p) for p in range(1, len(dims) + 1))
        M = tuple(math.ceil(3 * kappa * GAMMA * n * math.log(2 * n / e)) for n, e in zip(dims, eps_p))
        return cls(dims, M, eps_p, kappa)

    @classmethod
    def hierarchical(cls, dims, eps: float, delta: float, kappa: float = 2.0, *,
                     split: str = "uniform") -> "LevelSchedule":
        """``M_p = ceil(2 kappa c_{delta_p} n_p ln(2 n_p / eps_p))`` and
        ``m_p = ceil(gamma / (1 - 2 delta) n_p ln(2 n_p / eps))``."""
        dims = tuple(int(n) for n in dims)
        q = len(dims) if split == "uniform" else None
        eps_p = tuple(split_budget(eps, q, p) for p in range(1, len(dims) + 1))
        deltas = tuple(split_budget(delta, q, p) for p in range(1, len(dims) + 1))
        M = tuple(math.ceil(2 * kappa * c_delta(dp) * n * math.log(2 * n / e))
                  for n, e, dp in zip(dims, eps_p, deltas))
        m = tuple(hierarchical_budget(n, sum(deltas), eps) for n in dims)
        return cls(dims, M, eps_p, kappa, deltas, m)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "LevelSchedule":
        """Either explicit fields, or ``{"preset": "multilevel"|"hierarchical", ...}``."""
        data = dict(data)
        preset = data.pop("preset", None)
        if preset == "multilevel":
            return cls.multilevel(data["dims"], data["eps"], data.get("kappa", 2.0), split=data.get("split", "uniform"))
        if preset == "hierarchical":
            return cls.hierarchical(data["dims"], data["eps"], data["delta"], data.get("kappa", 2.0),
                                    split=data.get("split", "uniform"))
        if preset is not None:
            raise ScheduleError(f"unknown schedule preset {preset!r}")
        tup = lambda v: None if v is None else tuple(v)  # noqa: E731
        return cls(tuple(data["dims"]), tuple(data["offline"]), tuple(data["eps"]), data.get("kappa", 2.0),
                   tup(data.get("deltas")), tup(data.get("online")))


def total_degree_dims(d: int, degrees) -> tuple[int, ...]:
    return tuple(math.comb(d + k, k) for k in degrees)


def _ladder(domain: Domain, dims) -> list[PolynomialSpace]:
    degree = 0
    while math.comb(domain.dim + degree, degree) < dims[-1]:
        degree += 1
    full = PolynomialSpace.for_domain(domain, degree, dims[-1])
    return [full.prefix(n) for n in dims]


# ---------------------------------------------------------------------------
# multilevel offline stage


def _level_draw(prev: ChristoffelEvaluator | None, domain: Domain, M: int, rng: np.random.Generator,
                alpha_samples: int) -> tuple[DiscreteInnerProduct, float]:
    """``M`` points from the previous perturbed measure with normalized weights ``n / (alpha k~)``."""
    if prev is None:
        return DiscreteInnerProduct(sample_uniform(domain, M, rng)), 1.0
    alpha, _ = estimate_alpha(prev, domain, rng, alpha_samples)
    measure = SamplingMeasure.perturbed(prev, domain, rng, alpha)
    s = measure.sample(M, rng)
    return DiscreteInnerProduct(s.points, s.weights), alpha


def algorithm2_multilevel(schedule: LevelSchedule, domain: Domain, rng: np.random.Generator, *,
                          diagnostics: bool = True, alpha_samples: int = ALPHA_SAMPLES) -> OfflineResult:
    """Offline stage over the ladder ``V_{n_1} c ... c V_{n_q}``.

    Level ``p`` samples ``M_p`` points from ``sigma~_{p-1}`` (mu at p = 1) and
    orthonormalizes ``V_{n_p}`` in the ``w~_{p-1}``-weighted inner product.
    """
    spaces = _ladder(domain, schedule.dims)
    prev = None
    levels = []
    ip = None
    for p, (space, M) in enumerate(zip(spaces, schedule.offline), start=1):
        t0 = time.perf_counter()
        ip, alpha = _level_draw(prev, domain, M, rng, alpha_samples)
        try:
            basis = orthonormalize_discrete(space, ip)
        except RankDeficientError as exc:
            raise RankDeficientError(exc.rank, exc.n, f"level {p}: {exc}") from exc
        rec = {"level": p, "n": space.n, "M": M, "alpha_prev": alpha, "seconds": time.perf_counter() - t0}
        if diagnostics:
            d = _exact_diagnostics(space, domain, ip)
            if d is not None:
                rec["kappa_G"] = d.condition
                rec["deviation_G"] = d.deviation
        levels.append(rec)
        log.info("level %d: n=%d M=%d", p, space.n, M)
        prev = ChristoffelEvaluator(basis)
    diag = _exact_diagnostics(spaces[-1], domain, ip) if diagnostics else None
    return OfflineResult(prev.basis, int(sum(schedule.offline)), ip.id[0], diag, tuple(levels))


# ---------------------------------------------------------------------------
# hierarchical sampling


@dataclass
class HierarchicalSampleState:
    """Nested evaluation points of the hierarchical sampler, extended one level at a time."""

    domain: Domain
    dims: list[int] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    bases: list[OrthonormalBasis] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    points: np.ndarray | None = None
    levels: np.ndarray | None = None
    records: list[dict] = field(default_factory=list)

    @property
    def q(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return self.counts[-1] if self.counts else 0

    def bracket(self, p: int, x) -> np.ndarray:
        """``(m_p/n_p) sum_{j<=n_p} |L_j^p|^2 - (m_{p-1}/n_{p-1}) sum_{j<=n_{p-1}} |L_j^p|^2`` (p is 1-based)."""
        B = self.bases[p - 1](x)
        sq = B * B
        out = self.counts[p - 1] / self.dims[p - 1] * sq.sum(axis=1)
        if p > 1:
            n_prev = self.dims[p - 2]
            out -= self.counts[p - 2] / n_prev * sq[:, :n_prev].sum(axis=1)
        return out

    def density(self, p: int, x) -> np.ndarray:
        """``d rho_p / d mu``."""
        m_prev = self.counts[p - 2] if p > 1 else 0
        return self.alphas[p - 1] / (self.counts[p - 1] - m_prev) * self.bracket(p, x)

    def mixture(self, x, q: int | None = None) -> np.ndarray:
        """``sum_p (m_p - m_{p-1}) d rho_p / d mu`` over the first ``q`` levels."""
        q = self.q if q is None else q
        total = np.zeros(len(np.atleast_2d(x)))
        for p in range(1, q + 1):
            m_prev = self.counts[p - 2] if p > 1 else 0
            total += (self.counts[p - 1] - m_prev) * self.density(p, x)
        return total

    def weight(self, x, q: int | None = None) -> np.ndarray:
        """Cumulative weight ``w = m_q / mixture``."""
        q = self.q if q is None else q
        return self.counts[q - 1] / self.mixture(x, q)

    def sample(self, q: int | None = None) -> WeightedSample:
        """The first ``m_q`` points with the level-``q`` weights."""
        q = self.q if q is None else q
        m = self.counts[q - 1]
        pts = self.points[:m]
        return WeightedSample(pts, self.weight(pts, q), "hierarchical", self.levels[:m].copy())


NEGATIVITY_TOL = 1e-10


def algorithm3_step(state: HierarchicalSampleState, space: PolynomialSpace, M: int, m: int,
                    rng: np.random.Generator, *, probe_count: int = 10_000,
                    alpha_samples: int = ALPHA_SAMPLES) -> HierarchicalSampleState:
    """Add one level: offline basis for ``space`` and ``m - m_{p-1}`` new evaluation points."""
    domain = state.domain
    n = space.n
    if state.q:
        if n <= state.dims[-1] or m <= state.m:
            raise ScheduleError("levels must increase both n_p and m_p")
        if m / n < state.m / state.dims[-1]:
            raise ScheduleError("schedule violates m_p/n_p monotonicity")
    t0 = time.perf_counter()
    prev = ChristoffelEvaluator(state.bases[-1]) if state.q else None
    ip, _ = _level_draw(prev, domain, M, rng, alpha_samples)
    p = state.q + 1
    try:
        basis = orthonormalize_discrete(space, ip)
    except RankDeficientError as exc:
        raise RankDeficientError(exc.rank, exc.n, f"level {p}: {exc}") from exc
    state.dims.append(n)
    state.counts.append(m)
    state.bases.append(basis)
    state.alphas.append(math.nan)

    def bracket(x):
        return state.bracket(p, x)

    probes = sample_uniform(domain, probe_count, rng)
    low = float(bracket(probes).min())
    if low < -NEGATIVITY_TOL:
        for lst in (state.dims, state.counts, state.bases, state.alphas):
            lst.pop()
        raise ScheduleError(f"schedule violates m_p/n_p monotonicity (density {low:.3e} at a probe)")
    # alpha_p = (m_p - m_{p-1}) / E_mu[bracket]
    mc = bracket(sample_uniform(domain, alpha_samples, rng))
    m_prev = state.counts[-2] if p > 1 else 0
    alpha = (m - m_prev) / float(mc.mean())
    se = alpha * float(mc.std(ddof=1)) / math.sqrt(len(mc)) / float(mc.mean())
    state.alphas[-1] = alpha
    log.info("level %d: alpha = %.6f +- %.2e", p, alpha, se)

    env = build_envelope(bracket, domain, rng, probe_count)
    new, _, _, violations = rejection_sample(bracket, env, domain, m - m_prev, rng, f"rho_{p}")
    tags = np.full(len(new), p, dtype=int)
    state.points = new if state.points is None else np.concatenate([state.points, new])
    state.levels = tags if state.levels is None else np.concatenate([state.levels, tags])
    state.records.append({"level": p, "n": n, "M": M, "m": m, "alpha": alpha, "alpha_se": se,
                          "min_probe_density": low, "violations": violations,
                          "seconds": time.perf_counter() - t0})
    return state


def algorithm3_hierarchical(schedule: LevelSchedule, domain: Domain, rng: np.random.Generator, *,
                            probe_count: int = 10_000, alpha_samples: int = ALPHA_SAMPLES,
                            state: HierarchicalSampleState | None = None) -> HierarchicalSampleState:
    """Run every level of ``schedule`` (or the ones beyond ``state``) and return the state."""
    if schedule.online is None:
        raise ScheduleError("hierarchical sampling needs online counts m_p")
    schedule.check_monotone()
    spaces = _ladder(domain, schedule.dims)
    state = HierarchicalSampleState(domain) if state is None else state
    for space, M, m in list(zip(spaces, schedule.offline, schedule.online))[state.q:]:
        algorithm3_step(state, space, M, m, rng, probe_count=probe_count, alpha_samples=alpha_samples)
    return state
