"""Domains, uniform sampling by rejection, and exact moments.

Four built-in planar domains are provided::

    disc           {x1^2 + x2^2 <= 2/pi}                      area 2
    corner_polygon {-1<=x1<=1, |x1|-1 <= x2 <= |x1|}          area 2
    cusp           {-1<=x1<=1, sqrt|x1|-1 <= x2 <= sqrt|x1|}  area 2
    square         [-1, 1]^2                                  area 4

For these the normalized moments E_mu[u^nu], with u the bounding-box
coordinates rescaled to [-1, 1]^d, are rational numbers and are returned
exactly as :class:`fractions.Fraction`.  Custom domains only carry an
indicator, a bounding box and a Monte-Carlo area.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DISC_RADIUS = math.sqrt(2.0 / math.pi)

# rejection sampler aborts when fewer than this fraction of proposals are
# accepted over a window of WINDOW proposals
MIN_ACCEPTANCE = 1e-6
WINDOW = 10_000_000


class DegenerateDomainError(RuntimeError):
    pass


class NoMomentOracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# boundary pieces


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def endpoints(self):
        return [self.start, self.end]

    def distance(self, x: np.ndarray) -> np.ndarray:
        p, q = np.asarray(self.start), np.asarray(self.end)
        v = q - p
        t = np.clip(((x - p) @ v) / (v @ v), 0.0, 1.0)
        return np.linalg.norm(x - (p + t[..., None] * v), axis=-1)

    def points(self, count: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, count)[:, None]
        return (1 - t) * np.asarray(self.start) + t * np.asarray(self.end)


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    @property
    def endpoints(self):
        return []

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius)

    def points(self, count: int) -> np.ndarray:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.asarray(self.center) + self.radius * np.column_stack([np.cos(th), np.sin(th)])


@dataclass(frozen=True)
class SqrtCurve:
    """The arc {(side*t^2, t + offset) : 0 <= t <= 1}, i.e. x2 = sqrt|x1| + offset."""

    side: int
    offset: float

    @property
    def endpoints(self):
        return [(0.0, self.offset), (float(self.side), 1.0 + self.offset)]

    def _point(self, t):
        return np.stack([self.side * t**2, t + self.offset], axis=-1)

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.empty(len(x))
        for i, (a, b) in enumerate(x):
            # stationary points of |p(t) - x|^2 solve a cubic in t
            coeffs = [4.0, 0.0, 2.0 - 4.0 * self.side * a, 2.0 * (self.offset - b)]
            roots = np.roots(coeffs)
            cand = [0.0, 1.0] + [r.real for r in roots if abs(r.imag) < 1e-9 and 0.0 <= r.real <= 1.0]
            t = np.array(cand)
            out[i] = np.min(np.linalg.norm(self._point(t) - np.array([a, b]), axis=-1))
        return out

    def points(self, count: int) -> np.ndarray:
        return self._point(np.linspace(0.0, 1.0, count))


def _adjacent_pairs(pieces) -> list[tuple[int, int]]:
    pairs = []
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            if any(
                math.dist(p, q) < 1e-12
                for p in pieces[i].endpoints
                for q in pieces[j].endpoints
            ):
                pairs.append((i, j))
    return pairs


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True, eq=False)
class Domain:
    """A bounded domain with the uniform probability measure on it.

    ``indicator`` maps an ``(N, d)`` array to a boolean ``(N,)`` array.
    ``bbox`` has shape ``(d, 2)``.  ``moment_oracle`` returns the rational
    normalized moment ``E_mu[u^nu]`` with ``u = (x - center) / halfwidth``.
    """

    name: str
    indicator: Callable[[np.ndarray], np.ndarray]
    bbox: np.ndarray
    area: float
    moment_oracle: Callable[[tuple[int, ...]], Fraction] | None = None
    pieces: tuple = ()
    area_samples: int | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.bbox)

    @property
    def center(self) -> np.ndarray:
        return self.bbox.mean(axis=1)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.bbox[:, 1] - self.bbox[:, 0])

    @property
    def bbox_volume(self) -> float:
        return float(np.prod(self.bbox[:, 1] - self.bbox[:, 0]))

    @property
    def is_builtin(self) -> bool:
        return self.name in BUILTINS

    def contains(self, x) -> np.ndarray:
        return self.indicator(np.atleast_2d(np.asarray(x, dtype=float)))

    def boundary_points(self, count: int = 1000) -> np.ndarray:
        """Deterministic grid of ``count`` points spread over the boundary pieces."""
        if not self.pieces:
            return np.empty((0, self.dim))
        per = max(2, count // len(self.pieces))
        pts = np.concatenate([p.points(per) for p in self.pieces])
        return pts[:count] if len(pts) >= count else pts

    def extreme_points(self) -> np.ndarray:
        """Corners and cusp tips: every endpoint of a boundary piece."""
        pts = {tuple(np.round(e, 15)) for p in self.pieces for e in p.endpoints}
        if not pts:
            return np.empty((0, self.dim))
        return np.array(sorted(pts))

    def __repr__(self):
        return f"Domain({self.name!r})"


def _disc_indicator(x):
    return x[:, 0] ** 2 + x[:, 1] ** 2 <= 2.0 / math.pi


def _polygon_indicator(x):
    a = np.abs(x[:, 0])
    return (a <= 1.0) & (x[:, 1] >= a - 1.0) & (x[:, 1] <= a)


def _cusp_indicator(x):
    s = np.sqrt(np.abs(x[:, 0]))
    return (np.abs(x[:, 0]) <= 1.0) & (x[:, 1] >= s - 1.0) & (x[:, 1] <= s)


def _square_indicator(x):
    return np.all(np.abs(x) <= 1.0, axis=1)


def _half_even(a: int) -> Fraction:
    """E[t^a] for t uniform on [-1, 1]."""
    return Fraction(0) if a % 2 else Fraction(1, a + 1)


def _double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


@lru_cache(maxsize=None)
def _disc_moment(nu: tuple[int, ...]) -> Fraction:
    # unit disc: E[rho^(a+b)] * E[cos^a sin^b]
    a, b = nu
    if a % 2 or b % 2:
        return Fraction(0)
    radial = Fraction(2, a + b + 2)
    angular = Fraction(_double_factorial(a - 1) * _double_factorial(b - 1), _double_factorial(a + b))
    return radial * angular


@lru_cache(maxsize=None)
def _polygon_moment(nu: tuple[int, ...]) -> Fraction:
    # (1/2) * 2 * int_0^1 x^a (x^(b+1) - (x-1)^(b+1)) / (b+1) dx
    a, b = nu
    if a % 2:
        return Fraction(0)
    beta = Fraction(math.factorial(a) * math.factorial(b + 1), math.factorial(a + b + 2))
    return Fraction(1, b + 1) * (Fraction(1, a + b + 2) - (-1) ** (b + 1) * beta)


@lru_cache(maxsize=None)
def _cusp_moment(nu: tuple[int, ...]) -> Fraction:
    # substitute x = t^2 in the slice integral over [sqrt x - 1, sqrt x]
    a, b = nu
    if a % 2:
        return Fraction(0)
    beta = Fraction(math.factorial(2 * a + 1) * math.factorial(b + 1), math.factorial(2 * a + b + 3))
    return Fraction(2, b + 1) * (Fraction(1, 2 * a + b + 3) - (-1) ** (b + 1) * beta)


@lru_cache(maxsize=None)
def _square_moment(nu: tuple[int, ...]) -> Fraction:
    return math.prod((_half_even(a) for a in nu), start=Fraction(1))


def _polygon_pieces():
    v = [(-1.0, 0.0), (0.0, -1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0), (-1.0, 1.0)]
    return tuple(Segment(v[i], v[(i + 1) % len(v)]) for i in range(len(v)))


def _square_pieces():
    v = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    return tuple(Segment(v[i], v[(i + 1) % 4]) for i in range(4))


def _cusp_pieces():
    return (
        SqrtCurve(-1, -1.0),
        SqrtCurve(+1, -1.0),
        Segment((1.0, 0.0), (1.0, 1.0)),
        SqrtCurve(+1, 0.0),
        SqrtCurve(-1, 0.0),
        Segment((-1.0, 1.0), (-1.0, 0.0)),
    )


def _make_builtin(name: str) -> Domain:
    r = DISC_RADIUS
    box11 = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    if name == "disc":
        return Domain("disc", _disc_indicator, np.array([[-r, r], [-r, r]]), 2.0,
                      _disc_moment, (Circle((0.0, 0.0), r),))
    if name == "corner_polygon":
        return Domain("corner_polygon", _polygon_indicator, box11, 2.0, _polygon_moment, _polygon_pieces())
    if name == "cusp":
        return Domain("cusp", _cusp_indicator, box11, 2.0, _cusp_moment, _cusp_pieces())
    if name == "square":
        return Domain("square", _square_indicator, box11, 4.0, _square_moment, _square_pieces())
    raise KeyError(name)


BUILTINS = ("disc", "corner_polygon", "cusp", "square")
ALIASES = {"polygon": "corner_polygon", "cusp_domain": "cusp", "ball": "disc"}
_CACHE: dict[str, Domain] = {}


def builtin(name: str) -> Domain:
    """Return one of the built-in domains by name (``disc``, ``polygon``, ``cusp``, ``square``)."""
    key = ALIASES.get(name.lower(), name.lower())
    if key not in BUILTINS:
        raise KeyError(f"unknown built-in domain {name!r}; choose from {BUILTINS}")
    if key not in _CACHE:
        _CACHE[key] = _make_builtin(key)
    return _CACHE[key]


def custom_domain(
    indicator: Callable[[np.ndarray], np.ndarray],
    bbox,
    *,
    name: str = "custom",
    area_samples: int = 1_000_000,
    seed: int = 0,
) -> Domain:
    """Wrap a user indicator; the area is a Monte-Carlo estimate on ``area_samples`` box points."""
    bbox = np.asarray(bbox, dtype=float)
    rng = np.random.default_rng(seed)
    lo, hi = bbox[:, 0], bbox[:, 1]
    hits = 0
    done = 0
    while done < area_samples:
        k = min(250_000, area_samples - done)
        hits += int(np.count_nonzero(indicator(rng.uniform(lo, hi, size=(k, len(bbox))))))
        done += k
    vol = float(np.prod(hi - lo))
    area = vol * hits / area_samples
    if area <= 0:
        raise DegenerateDomainError(f"degenerate domain/bbox: no hits in {area_samples} box samples")
    return Domain(name, indicator, bbox, area, area_samples=area_samples,
                  metadata={"area_samples": area_samples, "area_seed": seed})


def domain_from_config(entry) -> Domain:
    """Build a domain from a config entry.

    ``entry`` is either a built-in name or a mapping with keys ``dimension``,
    ``bbox`` and ``inequalities``; the latter are strings such as
    ``"x1**2 + x2**2 <= 0.5"`` or ``"x2 >= sqrt(Abs(x1)) - 1"``.
    """
    if isinstance(entry, str):
        return builtin(entry)
    if "builtin" in entry:
        return builtin(entry["builtin"])
    import sympy

    d = int(entry["dimension"])
    syms = sympy.symbols([f"x{i + 1}" for i in range(d)])
    funcs = []
    for text in entry["inequalities"]:
        rel = sympy.sympify(text, locals={s.name: s for s in syms})
        if isinstance(rel, (sympy.core.relational.LessThan, sympy.core.relational.StrictLessThan)):
            expr = rel.lhs - rel.rhs
        elif isinstance(rel, (sympy.core.relational.GreaterThan, sympy.core.relational.StrictGreaterThan)):
            expr = rel.rhs - rel.lhs
        else:
            raise ValueError(f"not an inequality: {text!r}")
        funcs.append(sympy.lambdify(syms, expr, "numpy"))

    def indicator(x):
        ok = np.ones(len(x), dtype=bool)
        cols = [x[:, i] for i in range(d)]
        for f in funcs:
            ok &= np.asarray(f(*cols)) <= 0
        return ok

    return custom_domain(indicator, entry["bbox"], name=entry.get("name", "custom"),
                         area_samples=int(entry.get("area_samples", 1_000_000)),
                         seed=int(entry.get("area_seed", 0)))


# ---------------------------------------------------------------------------
# sampling


def sample_uniform(domain: Domain, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. points from the uniform measure on ``domain``.

    Proposals are drawn coordinate-wise from the bounding box and rejected
    when they fall outside the domain.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    d = domain.dim
    out = np.empty((count, d))
    if count == 0:
        return out
    lo, hi = domain.bbox[:, 0], domain.bbox[:, 1]
    if np.any(hi <= lo):
        raise DegenerateDomainError("degenerate domain/bbox: bounding box has zero volume")
    rate = min(1.0, domain.area / domain.bbox_volume)
    filled = 0
    window: list[tuple[int, int]] = []
    while filled < count:
        need = count - filled
        batch = int(min(2_000_000, max(256, 1.2 * need / max(rate, 1e-3) + 64)))
        prop = rng.uniform(lo, hi, size=(batch, d))
        acc = prop[domain.indicator(prop)]
        take = min(len(acc), need)
        out[filled:filled + take] = acc[:take]
        filled += take
        window.append((batch, len(acc)))
        proposed = sum(b for b, _ in window)
        while window and proposed - window[0][0] >= WINDOW:
            proposed -= window.pop(0)[0]
        accepted = sum(a for _, a in window)
        if proposed >= WINDOW and accepted < MIN_ACCEPTANCE * proposed:
            raise DegenerateDomainError(
                f"degenerate domain/bbox: acceptance {accepted}/{proposed} below {MIN_ACCEPTANCE}"
            )
        if len(acc):
            rate = max(len(acc) / batch, 1e-6)
    return out


def estimate_area(domain: Domain, trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo area from ``trials`` uniform bounding-box proposals."""
    lo, hi = domain.bbox[:, 0], domain.bbox[:, 1]
    hits = 0
    done = 0
    while done < trials:
        k = min(500_000, trials - done)
        hits += int(np.count_nonzero(domain.indicator(rng.uniform(lo, hi, size=(k, domain.dim)))))
        done += k
    return domain.bbox_volume * hits / trials


# ---------------------------------------------------------------------------
# moments


def normalized_moment(domain: Domain, nu: Sequence[int]) -> Fraction:
    """Exact ``E_mu[u^nu]`` in bounding-box coordinates ``u in [-1, 1]^d``."""
    if domain.moment_oracle is None:
        raise NoMomentOracleError(f"no moment oracle for domain {domain.name!r}")
    nu = tuple(int(a) for a in nu)
    if len(nu) != domain.dim or min(nu) < 0:
        raise ValueError(f"bad multi-index {nu}")
    return domain.moment_oracle(nu)


def exact_moment(domain: Domain | str, nu: Sequence[int]) -> float:
    """``(1/|D|) * integral_D x^nu dx`` for a built-in domain."""
    if isinstance(domain, str):
        domain = builtin(domain)
    nu = tuple(int(a) for a in nu)
    m = normalized_moment(domain, nu)
    if m == 0:
        return 0.0
    if np.any(domain.center != 0):
        raise NoMomentOracleError("moment oracle only supports domains centered at the origin")
    # built-in boxes are centered, so x^nu = prod(h_i^nu_i) u^nu
    scale = math.prod(float(h) ** a for h, a in zip(domain.halfwidth, nu))
    return float(m) * scale


# ---------------------------------------------------------------------------
# boundary distances


def boundary_pairs(domain: Domain) -> list[tuple[int, int]]:
    """Index pairs of boundary pieces that meet at an endpoint."""
    return _adjacent_pairs(domain.pieces)


def distance_to_boundary_pieces(domain: Domain, x, *, check: bool = True) -> list[float]:
    """Euclidean distance from ``x`` to each smooth boundary piece of ``domain``."""
    x = np.asarray(x, dtype=float)
    if not domain.pieces:
        raise ValueError(f"domain {domain.name!r} has no registered boundary pieces")
    if check and not bool(domain.contains(x)[0]):
        raise ValueError(f"point {x.tolist()} is outside {domain.name}")
    return [float(np.atleast_1d(p.distance(x[None, :]))[0]) for p in domain.pieces]
