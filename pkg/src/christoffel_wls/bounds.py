"""Theoretical bounds on the inverse Christoffel function and sampling budgets.

Everything here is a closed-form formula.  Constants that the theory only
asserts to exist are exposed as parameters rather than baked in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Domain, boundary_pairs, builtin, distance_to_boundary_pieces

#: ``gamma = 1 / (3/2 ln(3/2) - 1/2)``, the matrix Chernoff constant for delta = 1/2.
GAMMA = 1.0 / (1.5 * math.log(1.5) - 0.5)


def c_delta(delta: float) -> float:
    """``1 / ((1 + delta) ln(1 + delta) - delta)``; equals ``GAMMA`` at 1/2."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    # log1p keeps the difference accurate for small delta
    return 1.0 / ((1.0 + delta) * math.log1p(delta) - delta)


# ---------------------------------------------------------------------------
# domain classes


@dataclass(frozen=True)
class ParallelogramUnion:
    """Finite union of parallelograms; ``beta`` is the smallest volume ratio."""

    beta: float = 1.0


@dataclass(frozen=True)
class SmoothC2:
    """C^2 boundary; ``beta`` compares the domain with its inscribed ellipsoids."""

    beta: float = 1.0


@dataclass(frozen=True)
class RAlpha:
    """Domains locally like ``{max |x_i|^alpha_i <= x_d}``; ``C`` is user supplied."""

    alphas: tuple[float, ...]
    beta: float = 1.0
    C: float = 1.0


@dataclass(frozen=True)
class BallExact:
    pass


@dataclass(frozen=True)
class Custom:
    Bn: Callable[[int], float]
    beta: float = 1.0


DomainClass = ParallelogramUnion | SmoothC2 | RAlpha | BallExact | Custom


def _check_class(cls: DomainClass) -> None:
    beta = getattr(cls, "beta", 1.0)
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if isinstance(cls, RAlpha) and not all(0.0 < a <= 2.0 for a in cls.alphas):
        raise ValueError("alpha_i must lie in (0, 2]")


def ralpha_exponent(alphas, d: int) -> float:
    """Growth exponent ``(2 + sum 2/alpha_i) / d`` of ``K_n`` on an R_alpha domain."""
    return (2.0 + sum(2.0 / a for a in alphas)) / d


def bound_B(cls: DomainClass, d: int, n: int) -> float:
    """Upper bound ``B(n) >= K_n`` for the total-degree space of dimension ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_class(cls)
    if isinstance(cls, ParallelogramUnion):
        return n**2 / cls.beta
    if isinstance(cls, SmoothC2):
        return 3.0 * n ** ((d + 1) / d) / cls.beta
    if isinstance(cls, RAlpha):
        if len(cls.alphas) != d - 1:
            raise ValueError(f"need {d - 1} exponents alpha_i for d = {d}")
        return cls.C * n ** ralpha_exponent(cls.alphas, d)
    if isinstance(cls, BallExact):
        degree = _degree_for(d, n)
        return float(ball_boundary_k(d, degree))
    if isinstance(cls, Custom):
        return float(cls.Bn(n))
    raise TypeError(f"unknown domain class {cls!r}")


def _degree_for(d: int, n: int) -> int:
    degree = 0
    while math.comb(d + degree, degree) < n:
        degree += 1
    if math.comb(d + degree, degree) != n:
        raise ValueError(f"n = {n} is not a total-degree dimension in d = {d}")
    return degree


#: Default classes for the built-in domains, with the constants used in the experiments.
DEFAULT_CLASSES: dict[str, DomainClass] = {
    "square": ParallelogramUnion(1.0),
    "corner_polygon": ParallelogramUnion(0.5),
    "disc": SmoothC2(1.0),
    "cusp": RAlpha((0.5,), 1.0, 1.0),
}


def default_class(domain: Domain | str) -> DomainClass:
    name = builtin(domain).name if isinstance(domain, str) else domain.name
    if name not in DEFAULT_CLASSES:
        raise KeyError(f"no default bound for domain {name!r}")
    return DEFAULT_CLASSES[name]


def certified_sup(domain: Domain | str, d: int, n: int) -> float | None:
    """A proven bound on ``K_n`` for a built-in domain, or None.

    Only the square, the polygon and the disc have one.  The cusp bound
    carries an unknown constant and is never treated as certified.
    """
    name = builtin(domain).name if isinstance(domain, str) else domain.name
    try:
        degree = _degree_for(d, n)
    except ValueError:
        return None
    if name == "square":
        return float(n**2)
    if name == "corner_polygon":
        return 2.0 * n**2
    if name == "disc":
        return float(ball_boundary_k(d, degree))
    return None


# ---------------------------------------------------------------------------
# closed forms


def ball_boundary_k(d: int, degree: int) -> int:
    """``k_n`` on the unit sphere for the uniform measure on the unit ball.

    ``C(l+d+1, l) + C(l+d, l-1)``; for ``d = 1`` this is the Legendre endpoint
    value ``(l+1)^2`` and for ``d = 2`` it is ``sum_{k<=l} (k+1)^2``.  The
    maximum of ``k_n`` over the ball is attained on the sphere.
    """
    if d < 1 or degree < 0:
        raise ValueError("need d >= 1 and degree >= 0")
    second = 0 if degree == 0 else math.comb(degree + d, degree - 1)
    return math.comb(degree + d + 1, degree) + second


def ball_sandwich(d: int, n: int) -> tuple[float, float]:
    """``(e^-1 n^((d+1)/d), 3 n^((d+1)/d))``, the two-sided bound on ``K_n`` for ellipsoids."""
    p = n ** ((d + 1) / d)
    return p / math.e, 3.0 * p


def comparison_framing(k_ref, beta: float) -> tuple:
    """``(beta k, k / beta)`` for domains comparable up to the volume ratio ``beta``."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    k_ref = np.asarray(k_ref, dtype=float)
    lo, hi = beta * k_ref, k_ref / beta
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def pointwise_bound_2d(domain: Domain | str, x, degree: int) -> float:
    """Shape ``n max_{(i,j)} rho_i(x) rho_j(x)`` of ``k_n(x)`` near the boundary.

    ``rho_i = min(l, dist(x, Gamma_i)^{-1/2})`` and the pairs run over
    boundary pieces that meet.  A domain with a single closed piece uses
    ``n rho_1``.  The constants are unknown, so this is a shape only.
    """
    if isinstance(domain, str):
        domain = builtin(domain)
    if domain.dim != 2:
        raise ValueError("pointwise bound is two-dimensional")
    n = math.comb(degree + 2, 2)
    dist = np.asarray(distance_to_boundary_pieces(domain, x))
    with np.errstate(divide="ignore"):
        rho = np.minimum(float(degree), np.where(dist > 0, dist**-0.5, np.inf))
    pairs = boundary_pairs(domain)
    if not pairs:
        return float(n * rho.max())
    return float(n * max(rho[i] * rho[j] for i, j in pairs))


# ---------------------------------------------------------------------------
# budgets


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")


def sufficient_M(n: int, Bn: float, eps: float) -> int:
    """Offline sample size ``ceil(gamma B(n) ln(2n/eps))``."""
    _check_eps(eps)
    if n < 1 or Bn < n:
        raise ValueError("need n >= 1 and B(n) >= n")
    return math.ceil(GAMMA * Bn * math.log(2 * n / eps))


def online_budget(n: int, c: float, eps: float) -> int:
    """``ceil(c gamma n ln(2n/eps))`` evaluations for the (near-)optimal measure."""
    _check_eps(eps)
    if n < 1 or c < 1:
        raise ValueError("need n >= 1 and c >= 1")
    return math.ceil(c * GAMMA * n * math.log(2 * n / eps))


def hierarchical_budget(n_p: int, delta: float, eps: float) -> int:
    """``ceil(gamma / (1 - 2 delta) n_p ln(2 n_p / eps))``."""
    _check_eps(eps)
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    return math.ceil(GAMMA / (1.0 - 2.0 * delta) * n_p * math.log(2 * n_p / eps))


def eta(m: int, n: int, c: float) -> float:
    """Error inflation ``4 c n / m`` of the truncated/conditioned estimators."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 4.0 * c * n / m
