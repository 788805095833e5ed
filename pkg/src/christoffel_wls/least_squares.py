"""Weighted least-squares fitting and the Gramian diagnostics around it."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import qr, solve_triangular

from .polyspace import Exact, OrthonormalBasis

log = logging.getLogger(__name__)


class RankError(np.linalg.LinAlgError):
    def __init__(self, rank: int, n: int):
        super().__init__(f"weighted collocation matrix has numerical rank {rank} < {n}")
        self.rank = rank
        self.n = n


class RedrawExhaustedError(RuntimeError):
    def __init__(self, redraws: int, last_deviation: float):
        super().__init__(f"no well-conditioned sample after {redraws} redraws (last ||G - I|| = {last_deviation:.3f})")
        self.redraws = redraws
        self.last_deviation = last_deviation


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Evaluation points with their least-squares weights.

    ``levels`` tags the level at which each point was drawn (hierarchical
    sampling), otherwise ``None``.
    """

    points: np.ndarray
    weights: np.ndarray
    measure: str = "mu"
    levels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if len(pts) < 1:
            raise ValueError("a weighted sample needs at least one point")
        if w.shape != (len(pts),) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite, one per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return len(self.points)

    def scaled(self, factor: float) -> "WeightedSample":
        return replace(self, weights=self.weights * factor)


@dataclass(frozen=True)
class GramianDiagnostics:
    deviation: float  # ||G - I||_2
    condition: float  # kappa(G)
    eig_min: float
    eig_max: float

    @property
    def norm_bounds(self) -> tuple[float, float]:
        """(1 - delta, 1 + delta): ``||v||_m^2 / ||v||^2`` lies in this range for v in V_n."""
        return 1.0 - self.deviation, 1.0 + self.deviation


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    basis: OrthonormalBasis
    diagnostics: GramianDiagnostics | None = None
    conditioned_zeroed: bool = False
    redraws_used: int = 0
    sample: WeightedSample | None = field(default=None, repr=False)

    @property
    def gramian_condition(self) -> float | None:
        return None if self.diagnostics is None else self.diagnostics.condition

    def __call__(self, x) -> np.ndarray:
        return self.basis(x) @ self.coefficients

    def to_json(self) -> str:
        diag = None
        if self.diagnostics is not None:
            d = self.diagnostics
            diag = {"deviation": d.deviation, "condition": d.condition, "eig_min": d.eig_min, "eig_max": d.eig_max}
        return json.dumps({
            "n": int(self.basis.n),
            "coefficients": [float(c).hex() for c in self.coefficients],
            "diagnostics": diag,
            "conditioned_zeroed": self.conditioned_zeroed,
            "redraws_used": self.redraws_used,
        })

    @staticmethod
    def coefficients_from_json(text: str) -> np.ndarray:
        return np.array([float.fromhex(c) for c in json.loads(text)["coefficients"]])


def gramian_matrix(sample: WeightedSample, basis: OrthonormalBasis) -> np.ndarray:
    """``G_jk = (1/m) sum_i w_i L_j(x_i) L_k(x_i)``."""
    A = basis(sample.points) * np.sqrt(sample.weights / sample.m)[:, None]
    return A.T @ A


def spectral_diagnostics(G: np.ndarray) -> GramianDiagnostics:
    lam = np.linalg.eigvalsh(G)
    lo, hi = float(lam[0]), float(lam[-1])
    dev = float(max(abs(lo - 1.0), abs(hi - 1.0)))
    cond = hi / lo if lo > 0 else np.inf
    return GramianDiagnostics(dev, float(cond), lo, hi)


def gramian(sample: WeightedSample, basis: OrthonormalBasis) -> tuple[np.ndarray, float, float]:
    """Gramian of ``basis`` in the discrete inner product of ``sample``.

    Returns ``(G, ||G - I||_2, kappa(G))``.
    """
    G = gramian_matrix(sample, basis)
    d = spectral_diagnostics(G)
    return G, d.deviation, d.condition


def fit(
    sample: WeightedSample,
    values,
    basis: OrthonormalBasis,
    *,
    reference: OrthonormalBasis | None = None,
) -> FitResult:
    """Weighted least-squares projection of ``values`` onto span(basis).

    Solved through a column-pivoted QR of the sqrt(w)-scaled collocation
    matrix.  Gramian diagnostics are attached when ``reference`` (or
    ``basis`` itself) is orthonormal for the continuous measure.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (sample.m,):
        raise ValueError("need one value per sample point")
    n = basis.n
    sw = np.sqrt(sample.weights)
    A = basis(sample.points) * sw[:, None]
    b = values * sw
    if sample.m < n:
        raise RankError(sample.m, n)
    Q, R, perm = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.count_nonzero(diag > tol))
    if rank < n:
        raise RankError(rank, n)
    z = solve_triangular(R, Q.T @ b)
    coef = np.empty(n)
    coef[perm] = z
    if reference is None and isinstance(basis.provenance, Exact):
        reference = basis
    diagnostics = None
    if reference is not None:
        diagnostics = spectral_diagnostics(gramian_matrix(sample, reference))
    return FitResult(coef, basis, diagnostics, sample=sample)


def truncate(y, tau: float):
    """``T_tau(y) = min(tau, |y|) sgn(y)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return np.clip(y, -tau, tau)


def estimate_truncated(fitres: FitResult, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return lambda x: truncate(fitres(x), tau)


def estimate_conditioned(fitres: FitResult) -> FitResult:
    """Zero the estimate when ``||G - I||_2 > 1/2``."""
    if fitres.diagnostics is None:
        raise ValueError("conditioned estimator requires exact reference basis")
    if fitres.diagnostics.deviation <= 0.5:
        return fitres
    return replace(fitres, coefficients=np.zeros_like(fitres.coefficients), conditioned_zeroed=True)


def fit_with_redraw(
    draw,
    m: int,
    values_oracle: Callable[[np.ndarray], np.ndarray],
    basis: OrthonormalBasis,
    max_redraws: int,
    rng: np.random.Generator,
    *,
    reference: OrthonormalBasis | None = None,
    noise: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None,
) -> FitResult:
    """Redraw the sample until ``||G - I||_2 <= 1/2``, then fit.

    ``draw(m, rng)`` returns a :class:`WeightedSample` (a sampling measure's
    bound ``sample`` method fits).  ``values_oracle`` is called once, on the
    accepted sample only.  ``noise(values, rng)`` optionally perturbs the
    observed values.
    """
    reference = reference or basis
    if not isinstance(reference.provenance, Exact):
        raise ValueError("conditioned estimator requires exact reference basis")
    dev = np.inf
    for redraws in range(max_redraws + 1):
        sample = draw(m, rng)
        _, dev, _ = gramian(sample, reference)
        if dev <= 0.5:
            values = np.asarray(values_oracle(sample.points), dtype=float)
            if noise is not None:
                values = values + noise(values, rng)
            res = fit(sample, values, basis, reference=reference)
            return replace(res, redraws_used=redraws)
        log.debug("redraw %d: ||G - I|| = %.3f", redraws + 1, dev)
    raise RedrawExhaustedError(max_redraws, float(dev))


# ---------------------------------------------------------------------------
# synthetic targets


@dataclass(frozen=True, eq=False)
class SyntheticTarget:
    """``u = sum_j c_j L_j`` over an exact orthonormal basis.

    The first ``n`` coefficients define the best approximation in V_n, the
    remaining ones the orthogonal tail.
    """

    basis: OrthonormalBasis
    n: int
    coefficients: np.ndarray
    tau: float = np.inf  # sup bound on |u|, for the truncated estimator

    @property
    def inner(self) -> np.ndarray:
        return self.coefficients[: self.n]

    @property
    def tail(self) -> np.ndarray:
        return self.coefficients[self.n:]

    @property
    def tail_energy(self) -> float:
        return float(self.tail @ self.tail)

    def __call__(self, x) -> np.ndarray:
        return self.basis(x) @ self.coefficients

    @classmethod
    def default(cls, basis: OrthonormalBasis, n: int, tail_energy: float = 1e-4,
                sup_k: float | None = None) -> "SyntheticTarget":
        """``c_j = 1/j`` on V_n; tail ``c_j ~ 1/j`` over the remaining functions, rescaled to ``tail_energy``.

        With ``sup_k`` a bound on the inverse Christoffel function of the full
        target basis, ``tau = |c| sqrt(sup_k)`` bounds |u| by Cauchy-Schwarz.
        """
        N = basis.n
        if N <= n:
            raise ValueError("the target basis must extend beyond V_n")
        j = np.arange(1, N + 1, dtype=float)
        c = 1.0 / j
        t = c[n:]
        c[n:] = t * np.sqrt(tail_energy / (t @ t))
        tau = np.inf if sup_k is None else float(np.linalg.norm(c) * np.sqrt(sup_k))
        return cls(basis, n, c, tau)


def exact_l2_error(fitres: FitResult, target: SyntheticTarget) -> float:
    """``||u - u_tilde||^2`` by Parseval in the target's exact basis."""
    n = target.n
    if fitres.basis.n != n or not isinstance(fitres.basis.provenance, Exact):
        raise ValueError("basis mismatch: fit must use the exact basis of V_n")
    if fitres.basis.provenance != target.basis.provenance or not np.array_equal(
        fitres.basis.transform, target.basis.transform[:n, :n]
    ):
        raise ValueError("basis mismatch: fit basis is not the target's leading basis")
    diff = target.inner - fitres.coefficients
    return float(diff @ diff + target.tail_energy)
