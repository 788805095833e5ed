"""Inverse Christoffel functions and the sampling measures built on them.

``k_n(x) = sum_j |L_j(x)|^2`` for an orthonormal basis ``L``.  The optimal
measure has density ``k_n / n`` with respect to mu; the perturbed measure
uses ``k~_n`` computed from a discretely orthonormalized basis.  Sampling
is by rejection against mu with a piecewise-constant envelope on a grid of
bounding-box cells.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import maximum_filter

from .bounds import certified_sup
from .geometry import Domain, sample_uniform
from .least_squares import WeightedSample
from .polyspace import Exact, OrthonormalBasis, exact_diagonal

log = logging.getLogger(__name__)

SAFETY = 1.2
CHUNK = 20_000


@dataclass(frozen=True, eq=False)
class ChristoffelEvaluator:
    """``x -> sum_j |L_j(x)|^2`` with an (optional) estimate of its sup."""

    basis: OrthonormalBasis
    sup_estimate: float = math.nan

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def provenance(self):
        return self.basis.provenance

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(len(x))
        for s in range(0, len(x), CHUNK):
            B = self.basis(x[s:s + CHUNK])
            out[s:s + CHUNK] = np.einsum("ij,ij->i", B, B)
        return out

    def truncate(self, k: int) -> "ChristoffelEvaluator":
        return ChristoffelEvaluator(self.basis.truncate(k))

    def with_sup(self, value: float) -> "ChristoffelEvaluator":
        return replace(self, sup_estimate=float(value))


def evaluate_k(ev: ChristoffelEvaluator, x):
    """``k_n`` at one point (returns a float) or at rows of an array."""
    arr = np.asarray(x, dtype=float)
    vals = ev(arr)
    return float(vals[0]) if arr.ndim == 1 else vals


def _probe_points(domain: Domain, probe_count: int, rng: np.random.Generator) -> np.ndarray:
    parts = [sample_uniform(domain, probe_count, rng), domain.extreme_points(), domain.boundary_points(1000)]
    return np.concatenate([p for p in parts if len(p)])


def sampled_sup(ev: ChristoffelEvaluator, domain: Domain, probe_count: int, rng: np.random.Generator) -> float:
    """Largest ``k_n`` over mu-samples, registered extreme points and the boundary grid."""
    return float(ev(_probe_points(domain, probe_count, rng)).max())


def estimate_sup(ev: ChristoffelEvaluator, domain: Domain, probe_count: int = 10_000,
                 rng: np.random.Generator | None = None) -> float:
    """Safety-factored probe maximum of ``k_n``, capped by a proven bound when one exists."""
    if probe_count < 1000:
        raise ValueError("probe_count must be >= 1000")
    rng = np.random.default_rng() if rng is None else rng
    est = SAFETY * sampled_sup(ev, domain, probe_count, rng)
    if isinstance(ev.provenance, Exact):
        bound = certified_sup(domain, domain.dim, ev.n)
        if bound is not None and bound < est:
            log.info("sup estimate %.4g capped by proven bound %.4g (n=%d)", est, bound, ev.n)
            est = bound
    return est


def integral_check(ev: ChristoffelEvaluator, domain: Domain) -> float:
    """``int k_n dmu = sum_j <L_j, L_j>``, computed from exact moments."""
    if domain.moment_oracle is None:
        raise ValueError(f"domain {domain.name!r} has no moment oracle")
    _, diag = exact_diagonal(ev.basis, domain)
    return float(sum(diag))


def estimate_alpha(ev: ChristoffelEvaluator, domain: Domain, rng: np.random.Generator,
                   count: int = 100_000) -> tuple[float, float]:
    """Normalization ``alpha = n / E_mu[k]`` by Monte Carlo, with its standard error."""
    k = ev(sample_uniform(domain, count, rng))
    mean = float(k.mean())
    se_mean = float(k.std(ddof=1) / math.sqrt(count)) if count > 1 else math.inf
    alpha = ev.n / mean
    se = alpha * se_mean / mean
    log.info("alpha = %.6f +- %.2e (n=%d, %d samples)", alpha, se, ev.n, count)
    return alpha, se


def heatmap(ev: ChristoffelEvaluator, domain: Domain, resolution: int = 400):
    """``k_n / n`` on a ``resolution``-square grid of the bounding box, NaN outside."""
    if domain.dim != 2:
        raise ValueError("heatmap is two-dimensional")
    (a1, b1), (a2, b2) = domain.bbox
    x1 = np.linspace(a1, b1, resolution)
    x2 = np.linspace(a2, b2, resolution)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.column_stack([X1.ravel(), X2.ravel()])
    vals = np.full(len(pts), np.nan)
    inside = domain.contains(pts)
    vals[inside] = ev(pts[inside]) / ev.n
    return X1, X2, vals.reshape(X1.shape)


# ---------------------------------------------------------------------------
# rejection envelope


@dataclass(frozen=True, eq=False)
class CellEnvelope:
    """Per-cell upper bounds of a density ratio on a regular bounding-box grid."""

    lo: np.ndarray
    width: np.ndarray
    shape: tuple[int, ...]
    values: np.ndarray

    @property
    def bound(self) -> float:
        return float(self.values.max())

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor((x - self.lo) / self.width).astype(int)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.shape)

    def enlarged(self, cells: np.ndarray, factor: float = 2.0) -> "CellEnvelope":
        """Multiply the given cells and their grid neighbours by ``factor``."""
        mask = np.zeros(self.shape, dtype=bool)
        mask.flat[np.unique(cells)] = True
        mask = maximum_filter(mask, size=3, mode="constant")
        vals = self.values.copy()
        vals[mask.ravel()] *= factor
        return replace(self, values=vals)

    def merged(self, other: "CellEnvelope") -> "CellEnvelope":
        return replace(self, values=np.maximum(self.values, other.values))


def _grid_shape(d: int) -> tuple[int, int]:
    """(cells per axis, probes per cell axis)."""
    if d == 1:
        return 512, 5
    if d == 2:
        return 64, 4
    return max(2, int(round(4096 ** (1 / d)))), 3


NEIGHBOUR_WEIGHT = 0.5


def build_envelope(ratio, domain: Domain, rng: np.random.Generator, probe_count: int = 10_000) -> CellEnvelope:
    """Envelope for ``ratio`` (a vectorized nonnegative function) on ``domain``.

    Each cell takes the largest ratio seen at grid probes (cell faces
    included), boundary and extreme points and mu-samples inside it, raised
    to half of its neighbourhood maximum, times a safety factor.  Cells with
    no probe borrow the neighbourhood maximum; cells far from every probe
    are treated as outside the domain.
    """
    d = domain.dim
    cells, per = _grid_shape(d)
    shape = (cells,) * d
    lo = domain.bbox[:, 0].astype(float)
    width = (domain.bbox[:, 1] - lo) / cells
    offs = np.linspace(0.0, 1.0, per)
    local = np.array(list(itertools.product(offs, repeat=d)))
    corners = np.array(list(itertools.product(range(cells), repeat=d)), dtype=float)
    grid = (lo + (corners[:, None, :] + local[None, :, :]) * width).reshape(-1, d)
    grid = grid[domain.contains(grid)]
    parts = [grid, sample_uniform(domain, probe_count, rng), domain.extreme_points(),
             domain.boundary_points(20_000)]
    pts = np.concatenate([p for p in parts if len(p)])
    r = ratio(pts)
    env = CellEnvelope(lo, width, shape, np.zeros(cells**d))
    own = np.zeros(cells**d)
    np.maximum.at(own, env.cell_of(pts), r)
    near = maximum_filter(own.reshape(shape), size=3, mode="nearest").ravel()
    vals = np.where(own > 0, np.maximum(own, NEIGHBOUR_WEIGHT * near), near)
    return replace(env, values=SAFETY * vals)


# ---------------------------------------------------------------------------
# sampling measures


MEASURE_KINDS = ("mu", "optimal", "perturbed")


@dataclass(eq=False)
class SamplingMeasure:
    """mu, the optimal measure ``(k_n/n) dmu`` or the perturbed ``alpha (k~_n/n) dmu``.

    The envelope grows (and is kept) whenever a sampler finds it violated.
    """

    kind: str
    domain: Domain
    evaluator: ChristoffelEvaluator | None = None
    alpha: float = 1.0
    envelope: CellEnvelope | None = None
    violations: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind != "mu" and self.evaluator is None:
            raise ValueError(f"{self.kind} measure needs a Christoffel evaluator")

    @classmethod
    def mu(cls, domain: Domain) -> "SamplingMeasure":
        return cls("mu", domain)

    @classmethod
    def optimal(cls, ev: ChristoffelEvaluator, domain: Domain, rng: np.random.Generator,
                probe_count: int = 10_000) -> "SamplingMeasure":
        m = cls("optimal", domain, ev)
        m.envelope = build_envelope(m.ratio, domain, rng, probe_count)
        return m

    @classmethod
    def perturbed(cls, ev: ChristoffelEvaluator, domain: Domain, rng: np.random.Generator,
                  alpha: float = 1.0, probe_count: int = 10_000) -> "SamplingMeasure":
        """``alpha`` only scales the weights; pass :func:`estimate_alpha` output for normalized ones."""
        m = cls("perturbed", domain, ev, alpha)
        m.envelope = build_envelope(m.ratio, domain, rng, probe_count)
        return m

    @property
    def n(self) -> int:
        return 1 if self.evaluator is None else self.evaluator.n

    @property
    def envelope_bound(self) -> float:
        return 1.0 if self.envelope is None else self.envelope.bound

    def ratio(self, x) -> np.ndarray:
        """Unnormalized density ratio ``k / n`` (the constant alpha is left out)."""
        if self.evaluator is None:
            return np.ones(len(np.atleast_2d(x)))
        return self.evaluator(x) / self.evaluator.n

    def weights(self, x) -> np.ndarray:
        if self.kind == "mu":
            return np.ones(len(np.atleast_2d(x)))
        return 1.0 / (self.alpha * self.ratio(x))

    def sample(self, count: int, rng: np.random.Generator) -> WeightedSample:
        return sample_measure(self, self.domain, count, rng)

    def copy(self) -> "SamplingMeasure":
        """Same measure with its own lock, so parallel trials don't share envelope growth."""
        with self._lock:
            return replace(self, _lock=threading.Lock())


def _rejection(ratio, env: CellEnvelope, domain: Domain, count: int, rng: np.random.Generator, label: str):
    """``(points, ratios, envelope)``, or ``(None, None, enlarged)`` on an envelope violation."""
    d = domain.dim
    probs = env.values / env.values.sum()
    cell_vol = float(np.prod(env.width))
    # accepted points per proposal if the envelope were tight and the density normalized
    rate = domain.area / (cell_vol * env.values.sum())
    out = np.empty((count, d))
    ratios = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        batch = int(min(500_000, max(256, 1.3 * need / max(rate, 1e-5))))
        cells = rng.choice(len(probs), size=batch, p=probs)
        base = np.column_stack(np.unravel_index(cells, env.shape)).astype(float)
        x = env.lo + (base + rng.random((batch, d))) * env.width
        inside = domain.indicator(x)
        x, cells = x[inside], cells[inside]
        r = ratio(x)
        e = env.values[cells]
        bad = r > e
        if bad.any():
            log.info("envelope of %s density violated at %d proposals; doubling those cells and restarting",
                        label, int(bad.sum()))
            return None, None, env.enlarged(cells[bad])
        acc = rng.random(len(x)) * e < r
        x, r = x[acc], r[acc]
        take = min(len(x), need)
        out[filled:filled + take] = x[:take]
        ratios[filled:filled + take] = r[:take]
        filled += take
        if len(x):
            rate = max(len(x) / batch, 1e-5)
    return out, ratios, env


def rejection_sample(ratio, envelope: CellEnvelope, domain: Domain, count: int, rng: np.random.Generator,
                     label: str = "target") -> tuple[np.ndarray, np.ndarray, CellEnvelope, int]:
    """Draw ``count`` points with density proportional to ``ratio`` against mu.

    Returns ``(points, ratio values, final envelope, violations)``.  A
    violated envelope is enlarged and the whole draw restarts, so the
    returned points all come from one valid envelope.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not np.all(np.isfinite(envelope.values)) or envelope.values.sum() <= 0:
        raise ValueError("sampling needs a finite, nonzero envelope")
    env = envelope
    violations = 0
    while True:
        pts, r, env = _rejection(ratio, env, domain, count, rng, label)
        if pts is not None:
            return pts, r, env, violations
        violations += 1


def sample_measure(measure: SamplingMeasure, domain: Domain, count: int, rng: np.random.Generator) -> WeightedSample:
    """``count`` i.i.d. points from ``measure`` with their least-squares weights."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if measure.kind == "mu":
        return WeightedSample(sample_uniform(domain, count, rng), np.ones(count), "mu")
    if measure.envelope is None:
        raise ValueError("sampling needs a finite envelope")
    pts, r, env, violations = rejection_sample(measure.ratio, measure.envelope, domain, count, rng, measure.kind)
    if violations:
        with measure._lock:
            measure.envelope = measure.envelope.merged(env)
            measure.violations += violations
    return WeightedSample(pts, 1.0 / (measure.alpha * r), measure.kind)
