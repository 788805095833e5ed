"""Total-degree polynomial spaces and their orthonormal bases.

A :class:`PolynomialSpace` is an ordered list of multi-indices, graded by
total degree; inside a degree block the indices are sorted with the last
coordinates ascending (for ``d = 2``: ``(k, 0), (k-1, 1), ..., (0, k)``).
Every prefix of that list is downward closed, so any prefix spans a
nested sequence of spaces.

Polynomials are never evaluated through bare monomials.  The *raw* basis
``phi_nu(x) = prod_i P_{nu_i}(u_i)`` uses Legendre polynomials normalized
on ``[-1, 1]`` (w.r.t. ``dt/2``) in the bounding-box coordinates ``u``.
``phi_nu`` equals a multiple of ``u^nu`` plus terms of strictly lower total
degree, so a basis that is lower triangular in the raw functions is also
lower triangular in the monomials.  An :class:`OrthonormalBasis` stores
that lower-triangular transform.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import gmpy2
import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.blas import dtrmm

from .geometry import Domain, builtin, normalized_moment

log = logging.getLogger(__name__)

PRECISION_BITS = 256


def _high_precision():
    return gmpy2.context(gmpy2.get_context(), precision=PRECISION_BITS)


class SingularMomentMatrixError(ArithmeticError):
    def __init__(self, index: int, pivot):
        super().__init__(f"moment matrix numerically singular at index {index} (pivot {float(pivot):.3e})")
        self.index = index


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, rank: int, n: int, msg: str | None = None):
        super().__init__(msg or f"sample does not determine V_n (rank {rank} < {n}); increase M")
        self.rank = rank
        self.n = n


# ---------------------------------------------------------------------------
# index sets


def space_dimension(d: int, degree: int) -> int:
    """``binom(d + degree, degree)``, the dimension of total-degree polynomials."""
    if d < 1 or degree < 0:
        raise ValueError("need d >= 1 and degree >= 0")
    n = math.comb(d + degree, degree)
    if n > np.iinfo(np.int64).max:
        raise OverflowError(f"dimension binom({d + degree}, {degree}) overflows int64")
    return n


def degree_block(d: int, k: int) -> list[tuple[int, ...]]:
    """All multi-indices of total degree ``k``, last coordinates ascending."""
    if d == 1:
        return [(k,)]
    out = []
    for rest in _compositions(d - 1, k):
        out.append((k - sum(rest),) + rest)
    return sorted(out, key=lambda nu: tuple(reversed(nu[1:])))


def _compositions(parts: int, total_max: int):
    if parts == 0:
        yield ()
        return
    for a in range(total_max + 1):
        for rest in _compositions(parts - 1, total_max - a):
            yield (a,) + rest


@dataclass(frozen=True)
class PolynomialSpace:
    """Graded total-degree space in ``dim`` variables.

    ``indices`` is the ordered tuple of multi-indices.  ``center`` and
    ``halfwidth`` define the box on which the raw Legendre basis lives.
    """

    dim: int
    indices: tuple[tuple[int, ...], ...]
    center: tuple[float, ...]
    halfwidth: tuple[float, ...]

    @classmethod
    def total_degree(cls, d: int, degree: int, n: int | None = None, *, box=None) -> "PolynomialSpace":
        """Space ``P_degree``; with ``n`` given, the first ``n`` graded indices instead.

        ``box`` is a ``(d, 2)`` array (usually the domain bbox); default ``[-1, 1]^d``.
        """
        full = space_dimension(d, degree)
        if n is None:
            n = full
        idx: list[tuple[int, ...]] = []
        k = 0
        while len(idx) < n:
            idx.extend(degree_block(d, k))
            k += 1
        box = np.array([[-1.0, 1.0]] * d) if box is None else np.asarray(box, dtype=float)
        return cls(d, tuple(idx[:n]), tuple(box.mean(axis=1)), tuple(0.5 * (box[:, 1] - box[:, 0])))

    @classmethod
    def for_domain(cls, domain: Domain, degree: int, n: int | None = None) -> "PolynomialSpace":
        return cls.total_degree(domain.dim, degree, n, box=domain.bbox)

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def max_degree(self) -> int:
        return max(sum(nu) for nu in self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(self.n, self.dim)

    def prefix(self, k: int) -> "PolynomialSpace":
        if not 1 <= k <= self.n:
            raise ValueError(f"prefix length {k} outside 1..{self.n}")
        return PolynomialSpace(self.dim, self.indices[:k], self.center, self.halfwidth)

    def to_unit_box(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - np.asarray(self.center)) / np.asarray(self.halfwidth)

    def evaluate(self, x) -> np.ndarray:
        """Raw tensor-Legendre basis at ``x``; returns shape ``(N, n)``."""
        u = self.to_unit_box(x)
        deg = self.max_degree
        idx = _index_columns(self.indices)
        scale = np.sqrt(2 * np.arange(deg + 1) + 1.0)
        out = None
        for i in range(self.dim):
            ui = np.ascontiguousarray(u[:, i])
            P = np.empty((deg + 1, len(u)))
            P[0] = 1.0
            if deg >= 1:
                P[1] = ui
            for k in range(1, deg):
                P[k + 1] = ((2 * k + 1) * ui * P[k] - k * P[k - 1]) / (k + 1)
            P *= scale[:, None]
            cols = P[idx[i]]
            out = cols if out is None else np.multiply(out, cols, out=out)
        # (N, n) in Fortran order: basis transforms then run without a copy
        return out.T

    def descriptor(self) -> dict:
        return {"dim": self.dim, "indices": [list(nu) for nu in self.indices],
                "center": list(self.center), "halfwidth": list(self.halfwidth)}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "PolynomialSpace":
        return cls(int(desc["dim"]), tuple(tuple(nu) for nu in desc["indices"]),
                   tuple(desc["center"]), tuple(desc["halfwidth"]))


@lru_cache(maxsize=64)
def _index_columns(indices: tuple[tuple[int, ...], ...]) -> tuple[np.ndarray, ...]:
    arr = np.array(indices, dtype=int)
    return tuple(np.ascontiguousarray(arr[:, i]) for i in range(arr.shape[1]))


def evaluate_monomials(space: PolynomialSpace, x) -> np.ndarray:
    """Plain monomials ``x^nu`` in space order, shape ``(N, n)``.

    Each column is a previous column times one coordinate.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    pos = {nu: j for j, nu in enumerate(space.indices)}
    out = np.empty((len(x), space.n))
    for j, nu in enumerate(space.indices):
        if not any(nu):
            out[:, j] = 1.0
            continue
        i = next(k for k, a in enumerate(nu) if a)
        parent = nu[:i] + (nu[i] - 1,) + nu[i + 1:]
        out[:, j] = out[:, pos[parent]] * x[:, i]
    return out


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class Exact:
    domain: str


@dataclass(frozen=True)
class Discrete:
    sample_id: str
    weights_id: str


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Functions ``L = transform @ phi`` with ``phi`` the raw basis of ``space``.

    Exact bases also carry ``transform_lo``, the rounding remainder of the
    high-precision transform, so that ``transform + transform_lo`` is the
    basis to double-double accuracy.  Evaluation in double ignores it.
    """

    space: PolynomialSpace
    transform: np.ndarray
    provenance: Exact | Discrete | None = None
    transform_lo: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        T = np.asarray(self.transform, dtype=float)
        object.__setattr__(self, "transform", T)
        lower = T.shape == (self.space.n, self.space.n) and not np.any(np.triu(T, 1))
        object.__setattr__(self, "_trmm", np.asfortranarray(T) if lower else None)

    @property
    def n(self) -> int:
        return self.space.n

    def __call__(self, x) -> np.ndarray:
        R = self.space.evaluate(x)
        if self._trmm is not None and len(R):
            return dtrmm(1.0, self._trmm, R, side=1, lower=1, trans_a=1, overwrite_b=1)
        return R @ self.transform.T

    def truncate(self, k: int) -> "OrthonormalBasis":
        """First ``k`` functions; triangularity makes this a basis of the prefix space."""
        lo = None if self.transform_lo is None else self.transform_lo[:k, :k].copy()
        return OrthonormalBasis(self.space.prefix(k), self.transform[:k, :k].copy(), self.provenance, lo,
                                dict(self.info))

    def to_json(self) -> str:
        prov = None
        if isinstance(self.provenance, Exact):
            prov = {"kind": "exact", "domain": self.provenance.domain}
        elif isinstance(self.provenance, Discrete):
            prov = {"kind": "discrete", "sample_id": self.provenance.sample_id,
                    "weights_id": self.provenance.weights_id}
        data = {
            "space": self.space.descriptor(),
            "transform": [float(v).hex() for v in self.transform.ravel()],
            "provenance": prov,
        }
        if self.transform_lo is not None:
            data["transform_lo"] = [float(v).hex() for v in self.transform_lo.ravel()]
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "OrthonormalBasis":
        data = json.loads(text)
        space = PolynomialSpace.from_descriptor(data["space"])
        t = np.array([float.fromhex(v) for v in data["transform"]]).reshape(space.n, space.n)
        lo = data.get("transform_lo")
        if lo is not None:
            lo = np.array([float.fromhex(v) for v in lo]).reshape(space.n, space.n)
        prov = data.get("provenance")
        if prov is None:
            p = None
        elif prov["kind"] == "exact":
            p = Exact(prov["domain"])
        else:
            p = Discrete(prov["sample_id"], prov["weights_id"])
        return cls(space, t, p, lo)


def evaluate_basis(basis: OrthonormalBasis, x) -> np.ndarray:
    return basis(x)


def identity_basis(space: PolynomialSpace) -> OrthonormalBasis:
    return OrthonormalBasis(space, np.eye(space.n))


# ---------------------------------------------------------------------------
# exact orthonormalization


@lru_cache(maxsize=None)
def _legendre_table(k: int) -> tuple[tuple[Fraction, ...], ...]:
    rows = [(Fraction(1),), (Fraction(0), Fraction(1))]
    for j in range(1, k):
        a = [Fraction(0)] + [Fraction(2 * j + 1, j + 1) * c for c in rows[j]]
        b = list(rows[j - 1]) + [Fraction(0)] * 2
        rows.append(tuple(a[i] - Fraction(j, j + 1) * b[i] for i in range(j + 2)))
    return tuple(rows[: k + 1])


def raw_gram_exact(space: PolynomialSpace, domain: Domain) -> np.ndarray:
    """Exact Gram matrix ``E_mu[phi_i phi_j]`` of the raw basis, without the sqrt(2k+1) scalings.

    Returned as an object array of :class:`gmpy2.mpq`.  The caller applies the
    diagonal Legendre normalization.
    """
    if not np.allclose(space.center, domain.center) or not np.allclose(space.halfwidth, domain.halfwidth):
        raise ValueError("exact Gram requires the space box to be the domain bounding box")
    return _raw_gram(space.indices, domain)


@lru_cache(maxsize=None)
def _legendre_expansion(nu: tuple[int, ...]) -> tuple:
    """Sparse monomial expansion of the unnormalized Legendre product ``P_nu``."""
    table = _legendre_table(max(max(nu, default=0), 1))
    terms = {(): gmpy2.mpq(1)}
    for a in nu:
        new = {}
        for key, c in terms.items():
            for p, coef in enumerate(table[a]):
                if coef:
                    new[key + (p,)] = c * gmpy2.mpq(coef.numerator, coef.denominator)
        terms = new
    return tuple(terms.items())


# per-domain caches of moments and Gram entries; entries are shared across nested spaces
_MOMENTS: dict = {}
_GRAM_ENTRIES: dict = {}


def _raw_gram(indices, domain):
    moments = _MOMENTS.setdefault(domain, {})
    entries = _GRAM_ENTRIES.setdefault(domain, {})

    def mom(alpha):
        v = moments.get(alpha)
        if v is None:
            f = normalized_moment(domain, alpha)
            v = moments[alpha] = gmpy2.mpq(f.numerator, f.denominator)
        return v

    n = len(indices)
    G = np.empty((n, n), dtype=object)
    zero = gmpy2.mpq(0)
    for i in range(n):
        ei = _legendre_expansion(indices[i])
        for j in range(i + 1):
            key = (indices[i], indices[j])
            s = entries.get(key)
            if s is None:
                s = zero
                for a, ca in ei:
                    for b, cb in _legendre_expansion(indices[j]):
                        m = mom(tuple(x + y for x, y in zip(a, b)))
                        if m:
                            s += ca * cb * m
                entries[key] = s
            G[i, j] = G[j, i] = s
    return G


def _to_mpfr_gram(space: PolynomialSpace, domain: Domain) -> np.ndarray:
    with _high_precision():
        Gq = raw_gram_exact(space, domain)
        scale = [gmpy2.sqrt(gmpy2.mpfr(math.prod(2 * a + 1 for a in nu))) for nu in space.indices]
        n = space.n
        G = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(i + 1):
                G[i, j] = G[j, i] = gmpy2.mpfr(Gq[i, j]) * scale[i] * scale[j]
    return G


def _cholesky_inverse_mp(G: np.ndarray) -> np.ndarray:
    """Inverse Cholesky factor ``T`` (lower, positive diagonal) with ``T G T^T = I``."""
    n = len(G)
    with _high_precision():
        L = np.empty((n, n), dtype=object)
        L[:] = gmpy2.mpfr(0)
        for k in range(n):
            piv = G[k, k] - (L[k, :k] @ L[k, :k] if k else 0)
            if piv <= 0:
                raise SingularMomentMatrixError(k, piv)
            L[k, k] = gmpy2.sqrt(piv)
            if k + 1 < n:
                col = G[k + 1:, k] - (L[k + 1:, :k] @ L[k, :k] if k else 0)
                L[k + 1:, k] = col / L[k, k]
        T = np.empty((n, n), dtype=object)
        T[:] = gmpy2.mpfr(0)
        for i in range(n):
            row = np.empty(n, dtype=object)
            row[:] = gmpy2.mpfr(0)
            row[i] = gmpy2.mpfr(1)
            if i:
                row[:i] = -(L[i, :i] @ T[:i, :i])
            T[i, : i + 1] = row[: i + 1] / L[i, i]
    return T


def orthonormalize_exact(space: PolynomialSpace, domain: Domain | str) -> OrthonormalBasis:
    """Orthonormal basis for the uniform measure on a built-in domain.

    The raw Gram matrix is assembled exactly from rational moments and the
    Cholesky factorization runs in ``PRECISION_BITS``-bit floating point; only
    the final transform is rounded to double.
    """
    if isinstance(domain, str):
        domain = builtin(domain)
    if domain.moment_oracle is None:
        raise ValueError(f"domain {domain.name!r} has no moment oracle")
    hi, lo = _exact_transform(space, domain)
    return OrthonormalBasis(space, hi.copy(), Exact(domain.name), lo.copy())


@lru_cache(maxsize=32)
def _exact_transform(space: PolynomialSpace, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    G = _to_mpfr_gram(space, domain)
    T = _cholesky_inverse_mp(G)
    n = len(T)
    hi = np.zeros((n, n))
    lo = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            hi[i, j] = float(T[i, j])
            lo[i, j] = float(T[i, j] - hi[i, j])
    return hi, lo


def _mp_transform(basis: OrthonormalBasis, rows=slice(None), cols=slice(None)) -> np.ndarray:
    hi = basis.transform[rows, cols]
    lo = np.zeros_like(hi) if basis.transform_lo is None else basis.transform_lo[rows, cols]
    out = np.empty(hi.shape, dtype=object)
    for idx in np.ndindex(hi.shape):
        out[idx] = gmpy2.mpfr(float(hi[idx])) + gmpy2.mpfr(float(lo[idx]))
    return out


def exact_gram_residual(basis: OrthonormalBasis, domain: Domain | str) -> np.ndarray:
    """``T G T^T - I`` in the exact inner product, evaluated in high precision.

    Uses the transform stored in ``basis`` (``transform + transform_lo``).
    """
    if isinstance(domain, str):
        domain = builtin(domain)
    G = _to_mpfr_gram(basis.space, domain)
    n = basis.n
    with _high_precision():
        T = _mp_transform(basis)
        lower = not np.any(np.triu(basis.transform, 1))
        out = np.empty((n, n))
        if not lower:
            R = (T @ G) @ T.T
            for i in range(n):
                for j in range(n):
                    out[i, j] = float(R[i, j] - (1 if i == j else 0))
            return out
        # T lower triangular and R symmetric: about a third of the dense work
        TG = np.empty((n, n), dtype=object)
        for i in range(n):
            TG[i] = T[i, : i + 1] @ G[: i + 1]
        for i in range(n):
            for j in range(i + 1):
                r = TG[i, : j + 1] @ T[j, : j + 1]
                out[i, j] = out[j, i] = float(r - (1 if i == j else 0))
    return out


def exact_diagonal(basis: OrthonormalBasis, domain: Domain | str) -> np.ndarray:
    """``<L_j, L_j>`` for every j in the exact inner product (high precision)."""
    if isinstance(domain, str):
        domain = builtin(domain)
    G = _to_mpfr_gram(basis.space, domain)
    with _high_precision():
        diag = []
        for j in range(basis.n):
            t = _mp_transform(basis, j, slice(0, j + 1))
            diag.append(t @ (G[: j + 1, : j + 1] @ t))
    return np.array([float(v) for v in diag]), diag


# ---------------------------------------------------------------------------
# discrete orthonormalization


def _array_id(a: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(a).tobytes()).hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class DiscreteInnerProduct:
    """``<u, v> = (1/M) sum_i w_i u(z_i) v(z_i)``."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        w = np.ones(len(pts)) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (len(pts),):
            raise ValueError("weights must have one entry per point")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return len(self.points)

    def gram(self, funcs_at_points: np.ndarray) -> np.ndarray:
        A = funcs_at_points * np.sqrt(self.weights / self.M)[:, None]
        return A.T @ A

    @property
    def id(self) -> tuple[str, str]:
        return _array_id(self.points), _array_id(self.weights)


RANK_TOL = 1e-13


def orthonormalize_discrete(space: PolynomialSpace, ip: DiscreteInnerProduct) -> OrthonormalBasis:
    """Orthonormalize the raw basis of ``space`` for a discrete inner product.

    Uses the R factor of a QR decomposition of the weighted collocation matrix.
    """
    n = space.n
    if ip.M < n:
        raise RankDeficientError(ip.M, n)
    A = space.evaluate(ip.points) * np.sqrt(ip.weights / ip.M)[:, None]
    R = np.linalg.qr(A, mode="r")
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOL * diag.max():
        rank = int(np.count_nonzero(diag >= RANK_TOL * diag.max()))
        raise RankDeficientError(rank, n)
    R = R * np.sign(np.diag(R))[:, None]
    T = solve_triangular(R, np.eye(n), lower=False).T
    sid, wid = ip.id
    return OrthonormalBasis(space, T, Discrete(sid, wid))
