"""Config-driven experiment runner and the ``christoffel`` command line.

Every trial draws from its own stream
``SeedSequence(seed, spawn_key=(cell, trial))``, so results do not depend
on the number of threads.  Objects shared by the trials of one degree
(sampling envelopes, offline stages) use the one-element key ``(index,)``
or ``(index, trial, 0)``.

Output files, in long format with one row per trial per cell:

* ``<experiment>_<hash>.csv``: raw trial rows, each with ``seed``, ``cell`` and ``trial``
* ``<experiment>_<hash>_summary.csv``: one row per cell (mean, median, failures)
* ``<experiment>_<hash>.json``: the :class:`RunRecord`
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .algorithms import (
    LevelSchedule,
    algorithm1_offline,
    algorithm2_multilevel,
    algorithm3_hierarchical,
    empirical_M,
)
from .bounds import ball_sandwich, bound_B, default_class, online_budget, sufficient_M
from .christoffel import ChristoffelEvaluator, SamplingMeasure, heatmap
from .geometry import Domain, domain_from_config, sample_uniform
from .least_squares import RankError, SyntheticTarget, exact_l2_error, fit, gramian
from .polyspace import PolynomialSpace, RankDeficientError, orthonormalize_exact, space_dimension

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

EXPERIMENTS = ("heatmap", "offline_phase", "empirical_phase", "online_phase", "error_budget", "acceptance", "offline")
MEASURES = ("mu", "optimal", "perturbed")
KAPPA_SATURATION = 10.0

_DEFAULT_GRID = {
    "offline_phase": (1.5, 2, 3, 5, 10, 20, 50, 100),
    "online_phase": (1.5, 2, 3, 5, 10),
    "error_budget": (1.5, 2, 3, 5, 10),
}
_DEFAULT_TRIALS = {"error_budget": 25}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def parse_degrees(text) -> tuple[int, ...]:
    """``"1..20"``, ``"2,5,10"``, an int or a sequence of ints."""
    if isinstance(text, int):
        return (text,)
    if isinstance(text, str):
        out: list[int] = []
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        return tuple(out)
    return tuple(int(k) for k in text)


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, str):
        return tuple(float(s) for s in v.split(",") if s.strip())
    if isinstance(v, (int, float)):
        return (float(v),)
    return tuple(float(s) for s in v)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  ``grid`` holds multiples of ``n`` (``M/n`` or ``m/n``).

    ``out`` and ``threads`` do not enter the config hash: they never change results.
    """

    experiment: str
    domain: str | dict = "disc"
    degrees: tuple[int, ...] = (10,)
    grid: tuple[float, ...] = ()
    trials: int = 100
    seed: int = 0
    eps: float = 0.01
    c_star: float = 3.0
    measures: tuple[str, ...] = MEASURES
    tail_energy: float = 1e-4
    resolution: int = 400
    algorithm: str = "empirical"
    M: int | None = None
    schedule: dict | None = None
    criteria: tuple[int, ...] = ()
    out: str | None = "results"
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        object.__setattr__(self, "degrees", parse_degrees(self.degrees))
        object.__setattr__(self, "grid", _floats(self.grid) or _DEFAULT_GRID.get(self.experiment, (1.0,)))
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "criteria", tuple(int(c) for c in self.criteria))
        if not self.degrees or min(self.degrees) < 0:
            raise ConfigError("degrees must be a non-empty list of non-negative integers")
        if min(self.grid) <= 0:
            raise ConfigError("grid values must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.c_star <= 1:
            raise ConfigError("c_star must exceed 1")
        if not self.measures or any(m not in MEASURES for m in self.measures):
            raise ConfigError(f"measures must be a non-empty subset of {MEASURES}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.algorithm not in ("a1", "a2", "a3", "empirical"):
            raise ConfigError("algorithm must be one of a1, a2, a3, empirical")

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        return cls.from_mapping(load_mapping(path), **overrides)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @property
    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def load_mapping(path: str | Path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(raw.decode())
    return json.loads(raw)


def artifact_version() -> str:
    """Package version plus a short digest of the package sources."""
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+src.{h.hexdigest()[:10]}"


# ---------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    experiment: str
    config: dict
    config_hash: str
    version: str
    cells: list[dict]
    wall_times: dict[str, float] = field(default_factory=dict)
    seeds: list[dict] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool | None:
        """Acceptance runs only: all criteria passed."""
        if self.experiment != "acceptance":
            return None
        return all(c["passed"] for c in self.cells)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("rows")
        return json.dumps(d, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _stat_row(cell: dict, values: list[float], failures: int, label: str) -> dict:
    arr = np.asarray(values, dtype=float)
    finite = arr[np.isfinite(arr)]
    return {
        **cell,
        "trials": len(arr),
        f"mean_{label}": float(finite.mean()) if len(finite) else math.nan,
        f"median_{label}": float(np.median(arr)) if len(arr) else math.nan,
        "failures": int(failures),
        "errors": int(np.count_nonzero(~np.isfinite(arr))),
    }


TrialFn = Callable[[dict, np.random.Generator, int], dict]


def _run_trials(cfg: ExperimentConfig, cells: list[dict], fn: TrialFn) -> tuple[list[dict], list[dict]]:
    """Run ``fn(cell, rng, trial)`` for every cell and trial; returns (rows, seeds)."""
    jobs = [(c, t) for c in range(len(cells)) for t in range(cfg.trials)]

    def one(job):
        c, t = job
        rng = trial_rng(cfg.seed, c, t)
        try:
            out = fn(cells[c], rng, t)
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            log.warning("cell %d trial %d failed: %s", c, t, exc)
            out = {"error": type(exc).__name__}
        return {**cells[c], "cell": c, "trial": t, "seed": cfg.seed, **out}

    with ThreadPoolExecutor(cfg.threads) as pool:
        rows = list(pool.map(one, jobs))
    seeds = [{"cell": c, "trial": t, "spawn_key": [c, t],
              "state": int(np.random.SeedSequence(cfg.seed, spawn_key=(c, t)).generate_state(1)[0])}
             for c, t in jobs]
    return rows, seeds


def _parallel_map(cfg: ExperimentConfig, fn, items: list):
    with ThreadPoolExecutor(cfg.threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# shared setup


def _domain(cfg: ExperimentConfig, *, exact: bool = True) -> Domain:
    D = domain_from_config(cfg.domain)
    if exact and D.moment_oracle is None:
        raise ConfigError(f"experiment {cfg.experiment!r} needs a domain with exact moments")
    return D


def _exact_basis(D: Domain, degree: int):
    return orthonormalize_exact(PolynomialSpace.for_domain(D, degree), D)


def _m_suf(D: Domain, n: int, eps: float) -> float:
    try:
        return float(sufficient_M(n, bound_B(default_class(D), D.dim, n), eps))
    except KeyError:
        return math.nan


def _optimal_measures(cfg: ExperimentConfig, D: Domain, degrees) -> dict[int, SamplingMeasure]:
    def build(item):
        i, k = item
        return k, SamplingMeasure.optimal(ChristoffelEvaluator(_exact_basis(D, k)), D, trial_rng(cfg.seed, i))
    return dict(_parallel_map(cfg, build, list(enumerate(degrees))))


def _perturbed_measures(cfg: ExperimentConfig, D: Domain, degrees, per_trial: bool) -> dict:
    """Offline stage (empirical M) per degree, or per (degree, trial)."""
    keys = [(i, k, t) for i, k in enumerate(degrees) for t in (range(cfg.trials) if per_trial else [None])]

    def build(item):
        i, k, t = item
        rng = trial_rng(cfg.seed, i, t, 0) if per_trial else trial_rng(cfg.seed, i, 0)
        M, off = empirical_M(PolynomialSpace.for_domain(D, k), D, cfg.c_star, rng=rng, diagnostics=False)
        return (k, t), (M, off.measure(D, rng))

    return dict(_parallel_map(cfg, build, keys))


# ---------------------------------------------------------------------------
# pipelines


def _heatmap(cfg: ExperimentConfig):
    D = _domain(cfg)
    rows, cells = [], []
    for k in cfg.degrees:
        ev = ChristoffelEvaluator(_exact_basis(D, k))
        X1, X2, V = heatmap(ev, D, cfg.resolution)
        inside = np.isfinite(V)
        for a, b, v in zip(X1[inside], X2[inside], V[inside]):
            rows.append({"degree": k, "n": ev.n, "x1": float(a), "x2": float(b), "k_over_n": float(v)})
        kmax = float(np.nanmax(V)) * ev.n
        cell = {"degree": k, "n": ev.n, "max_k": kmax, "max_k_over_n": kmax / ev.n,
                "min_k_over_n": float(np.nanmin(V)), "points": int(inside.sum())}
        if D.name == "disc":
            lo, hi = ball_sandwich(D.dim, ev.n)
            cell.update(sandwich_lo=lo, sandwich_hi=hi, within_sandwich=bool(lo <= kmax <= hi))
        cells.append(cell)
    return rows, cells, []


def _offline_phase(cfg: ExperimentConfig):
    """kappa(G_M) of the exact basis in the mu-sample inner product."""
    D = _domain(cfg)
    cells = []
    for k in cfg.degrees:
        n = space_dimension(D.dim, k)
        for f in cfg.grid:
            cells.append({"degree": k, "n": n, "factor": f, "M": max(1, math.ceil(f * n)),
                          "M_suf": _m_suf(D, n, cfg.eps)})
    bases = {k: _exact_basis(D, k) for k in cfg.degrees}

    def trial(cell, rng, t):
        z = sample_uniform(D, cell["M"], rng)
        B = bases[cell["degree"]](z)
        lam = np.linalg.eigvalsh(B.T @ B / cell["M"])
        kappa = float(lam[-1] / lam[0]) if lam[0] > 0 else math.inf
        return {"kappa_G": kappa, "deviation_G": float(max(abs(lam[0] - 1), abs(lam[-1] - 1)))}

    rows, seeds = _run_trials(cfg, cells, trial)
    return rows, _aggregate(cells, rows, "kappa_G", lambda r: r > cfg.c_star, saturate=True), seeds


def _empirical_phase(cfg: ExperimentConfig):
    """M_emp from the empirical search, with kappa(T) and kappa(G) at M_emp."""
    D = _domain(cfg)
    cells = []
    for k in cfg.degrees:
        n = space_dimension(D.dim, k)
        cells.append({"degree": k, "n": n, "c_star": cfg.c_star, "M_suf": _m_suf(D, n, cfg.eps)})

    def trial(cell, rng, t):
        M, off = empirical_M(PolynomialSpace.for_domain(D, cell["degree"]), D, cfg.c_star, rng=rng)
        return {"M_emp": M, "kappa_T": off.info["kappa_T"], "kappa_G": off.diagnostics.condition,
                "ratio_to_suf": M / cell["M_suf"]}

    rows, seeds = _run_trials(cfg, cells, trial)
    cells = _aggregate(cells, rows, "M_emp", None)
    for cell in cells:
        sub = [r for r in rows if r["cell"] == cell["cell"] and "error" not in r]
        kg = np.array([r["kappa_G"] for r in sub])
        cell["median_kappa_G"] = float(np.median(kg)) if len(kg) else math.nan
        cell["kappa_G_above_c_star_sq"] = int(np.count_nonzero(kg > cfg.c_star**2))
        cell["max_M_emp"] = max((r["M_emp"] for r in sub), default=math.nan)
    return rows, cells, seeds


def _online_cells(cfg: ExperimentConfig, D: Domain) -> list[dict]:
    cells = []
    for k in cfg.degrees:
        n = space_dimension(D.dim, k)
        for f in cfg.grid:
            for meas in cfg.measures:
                cells.append({"degree": k, "n": n, "factor": f, "m": max(1, math.ceil(f * n)), "measure": meas})
    return cells


def _online_phase(cfg: ExperimentConfig):
    """kappa(G) of the online sample for each measure."""
    D = _domain(cfg)
    cells = _online_cells(cfg, D)
    bases = {k: _exact_basis(D, k) for k in cfg.degrees}
    optimal = _optimal_measures(cfg, D, cfg.degrees) if "optimal" in cfg.measures else {}
    perturbed = _perturbed_measures(cfg, D, cfg.degrees, False) if "perturbed" in cfg.measures else {}

    def trial(cell, rng, t):
        k = cell["degree"]
        if cell["measure"] == "mu":
            measure = SamplingMeasure.mu(D)
        elif cell["measure"] == "optimal":
            measure = optimal[k].copy()
        else:
            measure = perturbed[(k, None)][1].copy()
        _, dev, kappa = gramian(measure.sample(cell["m"], rng), bases[k])
        return {"kappa_G": kappa, "deviation_G": dev}

    rows, seeds = _run_trials(cfg, cells, trial)
    return rows, _aggregate(cells, rows, "kappa_G", None, saturate=True,
                            fail=lambda r: r["deviation_G"] > 0.5), seeds


def _error_budget(cfg: ExperimentConfig):
    """Mean squared error of the weighted fit against a target with known best error."""
    D = _domain(cfg)
    cells = _online_cells(cfg, D)
    targets, fbs = {}, {}
    for k in cfg.degrees:
        full = _exact_basis(D, k + 1)
        n = space_dimension(D.dim, k)
        fbs[k] = full.truncate(n)
        targets[k] = SyntheticTarget.default(full, n, cfg.tail_energy)
    optimal = _optimal_measures(cfg, D, cfg.degrees) if "optimal" in cfg.measures else {}
    perturbed = _perturbed_measures(cfg, D, cfg.degrees, True) if "perturbed" in cfg.measures else {}

    def trial(cell, rng, t):
        k = cell["degree"]
        out = {}
        if cell["measure"] == "mu":
            measure = SamplingMeasure.mu(D)
        elif cell["measure"] == "optimal":
            measure = optimal[k].copy()
        else:
            out["M_offline"], measure = perturbed[(k, t)]
            measure = measure.copy()
        s = measure.sample(cell["m"], rng)
        try:
            res = fit(s, targets[k](s.points), fbs[k])
        except RankError:
            return {**out, "error_l2sq": math.inf, "deviation_G": math.inf}
        return {**out, "error_l2sq": exact_l2_error(res, targets[k]), "deviation_G": res.diagnostics.deviation}

    rows, seeds = _run_trials(cfg, cells, trial)
    return rows, _aggregate(cells, rows, "error_l2sq", lambda e: e > 2 * cfg.tail_energy), seeds


def _aggregate(cells, rows, key, fail_value=None, *, saturate=False, fail=None) -> list[dict]:
    out = []
    for c, cell in enumerate(cells):
        sub = [r for r in rows if r["cell"] == c]
        vals = [r.get(key, math.nan) for r in sub]
        if saturate:
            vals = [min(v, KAPPA_SATURATION) if not math.isnan(v) else v for v in vals]
        if fail is not None:
            failures = sum(1 for r in sub if "error" in r or fail(r))
        elif fail_value is not None:
            failures = sum(1 for r, v in zip(sub, vals) if "error" in r or fail_value(r[key]))
        else:
            failures = sum(1 for r in sub if "error" in r)
        out.append({"cell": c, **_stat_row(cell, vals, failures, key)})
    return out


def _acceptance(cfg: ExperimentConfig):
    from .acceptance import run_all

    results = run_all(seed=cfg.seed, only=cfg.criteria or None, threads=cfg.threads)
    cells = [r.as_dict() for r in results]
    return cells, cells, []


PIPELINES = {
    "heatmap": _heatmap,
    "offline_phase": _offline_phase,
    "empirical_phase": _empirical_phase,
    "online_phase": _online_phase,
    "error_budget": _error_budget,
    "acceptance": _acceptance,
    "offline": lambda cfg: ([], [run_offline(cfg)], []),
}


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Run ``cfg`` and, unless ``cfg.out`` is None, write the CSV and JSON files."""
    t0 = time.perf_counter()
    rows, cells, seeds = PIPELINES[cfg.experiment](cfg)
    record = RunRecord(cfg.experiment, cfg.to_dict(), cfg.hash, artifact_version(), cells,
                       {"total": time.perf_counter() - t0}, seeds, rows=rows)
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{cfg.experiment}_{cfg.hash}"
        record.files = {"trials": str(out / f"{stem}.csv"), "summary": str(out / f"{stem}_summary.csv"),
                        "record": str(out / f"{stem}.json")}
        Path(record.files["trials"]).write_text(to_csv(rows))
        Path(record.files["summary"]).write_text(to_csv(cells))
        Path(record.files["record"]).write_text(record.to_json())
    return record


def to_csv(rows: list[dict]) -> str:
    """Deterministic CSV (columns in first-seen order, floats by ``repr``)."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in cols})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def summarize(records: list[RunRecord]) -> str:
    """Markdown tables, one per record; empty input gives an empty report."""
    parts = []
    for rec in records:
        domain = rec.config.get("domain")
        title = f"## {rec.experiment}"
        if rec.experiment != "acceptance":
            title += f" ({domain if isinstance(domain, str) else 'custom'})"
        parts.append(f"{title}\n\nconfig `{rec.config_hash}`, version `{rec.version}`\n")
        if rec.experiment == "acceptance":
            table = [{"criterion": c["number"], "title": c["title"], "result": "PASS" if c["passed"] else "FAIL",
                      "tolerance": c["tolerance"], "observed": c["detail"]} for c in rec.cells]
        else:
            table = rec.cells
        parts.append(_markdown_table(table))
    return "\n".join(parts)


def _markdown_table(rows: list[dict]) -> str:
    if not rows:
        return "_no cells_\n"
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        lines.append("| " + " | ".join(_cell_text(r.get(c, "")) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def _cell_text(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v).replace("|", "/")


# ---------------------------------------------------------------------------
# offline runs and bound tables


def run_offline(cfg: ExperimentConfig) -> dict:
    """One offline stage; returns the OfflineResult metadata (M per level, kappa, timings)."""
    D = _domain(cfg, exact=False)
    rng = np.random.default_rng(cfg.seed)
    degree = cfg.degrees[-1]
    space = PolynomialSpace.for_domain(D, degree)
    t0 = time.perf_counter()
    if cfg.algorithm == "a1":
        M = cfg.M or math.ceil(sufficient_M(space.n, bound_B(default_class(D), D.dim, space.n), cfg.eps))
        meta = algorithm1_offline(space, D, M, rng, diagnostics=D.moment_oracle is not None).metadata()
    elif cfg.algorithm == "empirical":
        _, res = empirical_M(space, D, cfg.c_star, rng=rng, diagnostics=D.moment_oracle is not None)
        meta = res.metadata()
    else:
        if cfg.schedule is None:
            raise ConfigError(f"algorithm {cfg.algorithm} needs a schedule in the config")
        schedule = LevelSchedule.from_dict(cfg.schedule)
        if cfg.algorithm == "a2":
            meta = algorithm2_multilevel(schedule, D, rng, diagnostics=D.moment_oracle is not None).metadata()
        else:
            state = algorithm3_hierarchical(schedule, D, rng)
            meta = {"dims": state.dims, "m": state.counts, "alphas": state.alphas, "levels": state.records}
            if D.moment_oracle is not None:
                per_level = []
                for q in range(1, state.q + 1):
                    basis = orthonormalize_exact(PolynomialSpace.for_domain(D, degree, state.dims[q - 1]), D)
                    _, dev, kappa = gramian(state.sample(q), basis)
                    per_level.append({"level": q, "deviation_G": dev, "kappa_G": kappa})
                meta["gramian"] = per_level
        meta["schedule"] = schedule.to_dict()
    meta.update(algorithm=cfg.algorithm, domain=D.name, seed=cfg.seed, wall_seconds=time.perf_counter() - t0)
    return meta


def bounds_table(domain: str | dict, degrees, eps: float = 0.01, c: float = 1.0) -> list[dict]:
    """Rows of ``n, B(n), M_suf(n), m(n)`` for total-degree spaces on ``domain``."""
    D = domain_from_config(domain)
    cls = default_class(D)
    rows = []
    for k in parse_degrees(degrees):
        n = space_dimension(D.dim, k)
        B = bound_B(cls, D.dim, n)
        rows.append({"degree": k, "n": n, "B": B, "M_suf": sufficient_M(n, max(B, n), eps),
                     "m": online_budget(n, c, eps)})
    return rows


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML or JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int)
    common.add_argument("--domain")
    common.add_argument("--degrees", help='e.g. "1..15" or "5,10,15"')
    common.add_argument("--trials", type=int)
    common.add_argument("--grid", help="comma separated multiples of n")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="christoffel", description="Christoffel-function sampling experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("grid", parents=[common], help="heatmap, offline_phase or empirical_phase sweeps")
    g.add_argument("--experiment", choices=("heatmap", "offline_phase", "empirical_phase"))
    g.add_argument("--resolution", type=int)
    o = sub.add_parser("offline", parents=[common], help="run one offline stage, print metadata JSON")
    o.add_argument("--algorithm", choices=("a1", "a2", "a3", "empirical"))
    o.add_argument("--M", type=int)
    o.add_argument("--c-star", type=float, dest="c_star")
    sub.add_parser("online", parents=[common], help="online-phase conditioning sweep")
    e = sub.add_parser("error", parents=[common], help="error versus budget sweep")
    e.add_argument("--measures", help="comma separated subset of mu,optimal,perturbed")
    b = sub.add_parser("bounds", help="closed-form bounds and budgets")
    b.add_argument("action", choices=("table",))
    b.add_argument("--domain", default="disc")
    b.add_argument("--degrees", default="1..20")
    b.add_argument("--eps", type=float, default=0.01)
    b.add_argument("--c", type=float, default=1.0, help="online budget constant")
    b.add_argument("--out", help="write CSV here instead of stdout")
    a = sub.add_parser("accept", parents=[common], help="run the acceptance criteria")
    a.add_argument("--only", help="comma separated criterion numbers")
    return p


_EXPERIMENT_OF = {"online": "online_phase", "error": "error_budget", "accept": "acceptance", "offline": "offline"}


def _config_from_args(args) -> ExperimentConfig:
    data = load_mapping(args.config) if args.config else {}
    if args.command == "grid":
        data["experiment"] = args.experiment or data.get("experiment", "heatmap")
    else:
        data["experiment"] = _EXPERIMENT_OF[args.command]
    over = {"seed": args.seed, "out": args.out, "threads": args.threads, "domain": args.domain,
            "degrees": args.degrees, "trials": args.trials, "grid": args.grid}
    for name in ("resolution", "algorithm", "M", "c_star"):
        over[name] = getattr(args, name, None)
    if getattr(args, "measures", None):
        over["measures"] = tuple(args.measures.split(","))
    if getattr(args, "only", None):
        over["criteria"] = parse_degrees(args.only)
    if "trials" not in data and args.trials is None and data["experiment"] in _DEFAULT_TRIALS:
        over["trials"] = _DEFAULT_TRIALS[data["experiment"]]
    return ExperimentConfig.from_mapping(data, **over)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bounds":
            text = to_csv(bounds_table(args.domain, args.degrees, args.eps, args.c))
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        cfg = _config_from_args(args)
        if args.command == "offline":
            text = json.dumps(run_offline(cfg), indent=2, default=_json_default)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / f"offline_{cfg.algorithm}_{cfg.hash}.json").write_text(text)
            print(text)
            return 0
        record = run_experiment(cfg)
    except (ConfigError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if record.experiment == "acceptance":
        for c in record.cells:
            print(c["line"])
    print(summarize([record]))
    if record.files:
        print("wrote " + ", ".join(record.files.values()))
    if record.passed is False:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
