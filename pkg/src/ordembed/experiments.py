"""Convergence-rate experiment pipeline.

For each (dim, n) cell: sample a configuration, record its triplet table,
re-embed from scratch several times, keep the worst Procrustes-aligned
reconstruction per the repeated-embedding protocol, and aggregate the
displacement statistics with bootstrap confidence intervals.  Every trial is
a pure function of (master_seed, mode, dim, n, trial), so sweeps are
reproducible and resumable regardless of execution order or parallelism.
"""

from __future__ import annotations

import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .geometry import PointConfig, displacement, hausdorff_to_cube, procrustes_align
from .solver import AllRestartsFailedError, SolverParams, solve_embedding, worst_of_restarts
from .triplets import build_table, is_weakly_isotonic

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "SummaryRow",
    "TrialStore",
    "RepeatedEmbeddingResult",
    "sample_uniform_cube",
    "sample_box_exclusion",
    "bootstrap_ci",
    "wilson_interval",
    "loglog_slope",
    "run_sweep",
    "perturbation_probability",
    "repeated_embedding_study",
]

_MODE_CODES = {"uniform_cube": 0, "box_exclusion": 1}

TRIAL_HEADER = "mode,dim,n,trial,seed,d_inf,d_1,failed_restarts,hausdorff,wall_ms"
SUMMARY_HEADER = "mode,dim,n,mean_d_inf,ci_lo,ci_hi,mean_d_1,ci_lo1,ci_hi1,trials"


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition; defaults follow the full-protocol grid."""

    dims: tuple[int, ...] = (1, 2, 3, 4, 5)
    ns: tuple[int, ...] = (10, 15, 20, 25, 30, 35, 40, 45)
    trials_per_cell: int = 100
    restarts: int = 10
    solver: SolverParams = field(default_factory=SolverParams)
    master_seed: int = 0
    mode: str = "uniform_cube"
    bootstrap_B: int = 1000
    ci_level: float = 0.95
    box_placement: str = "origin"  # "origin" | "center"
    hausdorff_resolution: Optional[float] = None  # None: exact in 1-D, auto otherwise

    def __post_init__(self):
        if self.mode not in _MODE_CODES:
            raise ValueError(f"unknown mode {self.mode!r}; options: {sorted(_MODE_CODES)}")
        if self.box_placement not in ("origin", "center"):
            raise ValueError("box_placement must be 'origin' or 'center'")
        if self.trials_per_cell < 1 or self.restarts < 1 or self.bootstrap_B < 1:
            raise ValueError("counts must be positive")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")


@dataclass(frozen=True)
class TrialRecord:
    """One (dim, n, trial) cell: the worst-of-restarts displacement outcome."""

    mode: str
    dim: int
    n: int
    trial: int
    seed: int
    d_inf: float
    d_1: float
    failed_restarts: int
    hausdorff: float
    wall_ms: float

    def key(self) -> tuple:
        return (self.mode, self.dim, self.n, self.trial)

    def to_csv_row(self) -> str:
        return (
            f"{self.mode},{self.dim},{self.n},{self.trial},{self.seed},"
            f"{self.d_inf:.17g},{self.d_1:.17g},{self.failed_restarts},"
            f"{self.hausdorff:.17g},{self.wall_ms:.3f}"
        )

    @classmethod
    def from_csv_row(cls, row: str) -> "TrialRecord":
        parts = row.split(",")
        return cls(
            mode=parts[0], dim=int(parts[1]), n=int(parts[2]), trial=int(parts[3]),
            seed=int(parts[4]), d_inf=float(parts[5]), d_1=float(parts[6]),
            failed_restarts=int(parts[7]), hausdorff=float(parts[8]), wall_ms=float(parts[9]),
        )


@dataclass(frozen=True)
class SummaryRow:
    """Aggregated cell: means with percentile-bootstrap confidence intervals."""

    mode: str
    dim: int
    n: int
    mean_d_inf: float
    ci_lo: float
    ci_hi: float
    mean_d_1: float
    ci_lo1: float
    ci_hi1: float
    trials: int

    def to_csv_row(self) -> str:
        return (
            f"{self.mode},{self.dim},{self.n},{self.mean_d_inf:.17g},{self.ci_lo:.17g},"
            f"{self.ci_hi:.17g},{self.mean_d_1:.17g},{self.ci_lo1:.17g},{self.ci_hi1:.17g},"
            f"{self.trials}"
        )

    @classmethod
    def from_csv_row(cls, row: str) -> "SummaryRow":
        p = row.split(",")
        return cls(p[0], int(p[1]), int(p[2]), float(p[3]), float(p[4]), float(p[5]),
                   float(p[6]), float(p[7]), float(p[8]), int(p[9]))


def sample_uniform_cube(n: int, d: int, rng: np.random.Generator) -> PointConfig:
    """n i.i.d. uniform points in the unit cube."""
    if n < 3:
        raise ValueError("need at least three points")
    return PointConfig(rng.random((n, d)))


def sample_box_exclusion(
    n: int, d: int, rng: np.random.Generator, placement: str = "origin"
) -> PointConfig:
    """Uniform points on the unit cube minus a sub-cube of side n^(-1/3).

    placement "origin" excludes [0, n^(-1/3)]^d (the figure-caption version);
    "center" excludes the same cube centered at (1/2, ..., 1/2).
    """
    if n < 3:
        raise ValueError("need at least three points")
    side = n ** (-1.0 / 3.0)
    if side >= 1.0:
        raise ValueError("n^(-1/3) must be smaller than the cube")
    if placement == "origin":
        lo, hi = np.zeros(d), np.full(d, side)
    elif placement == "center":
        lo, hi = np.full(d, 0.5 - side / 2), np.full(d, 0.5 + side / 2)
    else:
        raise ValueError("placement must be 'origin' or 'center'")
    out = np.empty((n, d))
    got = 0
    while got < n:
        draw = rng.random((2 * (n - got) + 8, d))
        inside = np.all((draw >= lo) & (draw <= hi), axis=1)
        keep = draw[~inside]
        take = min(keep.shape[0], n - got)
        out[got:got + take] = keep[:take]
        got += take
    return PointConfig(out)


def bootstrap_ci(
    samples: Sequence[float], B: int = 1000, level: float = 0.95,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("samples must be nonempty")
    if rng is None:
        rng = np.random.default_rng(0)
    idx = rng.integers(0, arr.size, size=(B, arr.size))
    means = arr[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a Bernoulli proportion."""
    if trials < 1:
        raise ValueError("trials must be positive")
    z = float(norm.ppf(0.5 + level / 2))
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def loglog_slope(summary: Sequence[SummaryRow], dim: int) -> float:
    """Least-squares slope of log(mean d_inf) against log(n) for one dimension."""
    rows = sorted((r for r in summary if r.dim == dim), key=lambda r: r.n)
    if len(rows) < 3:
        raise ValueError(f"need at least 3 summary rows for dim={dim}, have {len(rows)}")
    xs = np.log([r.n for r in rows])
    ys = np.log([r.mean_d_inf for r in rows])
    return float(np.polyfit(xs, ys, 1)[0])


def _trial_seed_sequence(config: ExperimentConfig, dim: int, n: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        (config.master_seed, _MODE_CODES[config.mode], dim, n, trial)
    )


def _sample_for(config: ExperimentConfig, dim: int, n: int, rng: np.random.Generator) -> PointConfig:
    if config.mode == "uniform_cube":
        return sample_uniform_cube(n, dim, rng)
    return sample_box_exclusion(n, dim, rng, config.box_placement)


def _trial_hausdorff(config: ExperimentConfig, x: PointConfig) -> float:
    if config.hausdorff_resolution is not None and x.dim >= 2:
        return hausdorff_to_cube(x, config.hausdorff_resolution)
    if x.dim == 1:
        return hausdorff_to_cube(x)
    return hausdorff_to_cube(x, 2e-3 if x.dim == 2 else None)


def run_trial(config: ExperimentConfig, dim: int, n: int, trial: int) -> TrialRecord:
    """One full cell trial: sample, tabulate, re-embed worst-of-restarts, measure."""
    t0 = time.perf_counter()
    ss = _trial_seed_sequence(config, dim, n, trial)
    child_x, child_solver = ss.spawn(2)
    x = _sample_for(config, dim, n, np.random.default_rng(child_x))
    solver_seed = int(child_solver.generate_state(1, dtype=np.uint64)[0])
    params = replace(config.solver, dim=dim, restarts=config.restarts, rng_seed=solver_seed)
    y_worst, records = worst_of_restarts(x, params)
    rep = displacement(x, y_worst)
    failed = sum(1 for r in records if r.aligned is None)
    wall = (time.perf_counter() - t0) * 1000.0
    return TrialRecord(
        mode=config.mode, dim=dim, n=n, trial=trial, seed=solver_seed,
        d_inf=rep.d_inf, d_1=rep.d_1, failed_restarts=failed,
        hausdorff=_trial_hausdorff(config, x), wall_ms=wall,
    )


class TrialStore:
    """Append-only CSV store with idempotent (mode, dim, n, trial) keys."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple, TrialRecord] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines()[1:]:
                if line.strip():
                    rec = TrialRecord.from_csv_row(line)
                    self._records[rec.key()] = rec

    def __contains__(self, key: tuple) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: tuple) -> Optional[TrialRecord]:
        return self._records.get(key)

    def add(self, rec: TrialRecord) -> None:
        fresh = rec.key() not in self._records
        self._records[rec.key()] = rec
        if fresh and self.path is not None:
            new_file = not self.path.exists()
            with open(self.path, "a") as fh:
                if new_file:
                    fh.write(TRIAL_HEADER + "\n")
                fh.write(rec.to_csv_row() + "\n")

    def records(self) -> list[TrialRecord]:
        return [self._records[k] for k in sorted(self._records)]


def _summarize(config: ExperimentConfig, records: list[TrialRecord]) -> list[SummaryRow]:
    cells: dict[tuple[int, int], list[TrialRecord]] = {}
    for rec in records:
        cells.setdefault((rec.dim, rec.n), []).append(rec)
    out = []
    for (dim, n) in sorted(cells):
        rows = cells[(dim, n)]
        dinf = [r.d_inf for r in rows]
        d1 = [r.d_1 for r in rows]
        rng = np.random.default_rng(
            np.random.SeedSequence((config.master_seed, _MODE_CODES[config.mode], dim, n, 1 << 30))
        )
        lo, hi = bootstrap_ci(dinf, config.bootstrap_B, config.ci_level, rng)
        lo1, hi1 = bootstrap_ci(d1, config.bootstrap_B, config.ci_level, rng)
        out.append(SummaryRow(
            mode=config.mode, dim=dim, n=n,
            mean_d_inf=float(np.mean(dinf)), ci_lo=lo, ci_hi=hi,
            mean_d_1=float(np.mean(d1)), ci_lo1=lo1, ci_hi1=hi1,
            trials=len(rows),
        ))
    return out


def run_sweep(
    config: ExperimentConfig,
    store: Optional[TrialStore] = None,
    jobs: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> tuple[list[TrialRecord], list[SummaryRow]]:
    """Run all cells of the sweep; returns (trial records, summary rows).

    Cells already present in the store are skipped, and results are keyed by
    (mode, dim, n, trial), so reruns and parallel execution give identical
    output.  Trials whose every restart failed are dropped from the records
    (and logged through progress).
    """
    if store is None:
        store = TrialStore(None)
    todo = [
        (dim, n, trial)
        for dim in config.dims
        for n in config.ns
        for trial in range(config.trials_per_cell)
        if (config.mode, dim, n, trial) not in store
    ]
    if progress:
        progress(f"sweep mode={config.mode}: {len(todo)} trials to run, {len(store)} cached")

    def handle(item, rec_or_exc):
        dim, n, trial = item
        if isinstance(rec_or_exc, TrialRecord):
            store.add(rec_or_exc)
            if progress:
                progress(
                    f"  dim={dim} n={n} trial={trial}: d_inf={rec_or_exc.d_inf:.4g} "
                    f"({rec_or_exc.wall_ms:.0f} ms, {rec_or_exc.failed_restarts} failed restarts)"
                )
        else:
            if progress:
                progress(f"  dim={dim} n={n} trial={trial}: all restarts failed, dropped")

    if jobs <= 1:
        for item in todo:
            try:
                rec = run_trial(config, *item)
            except AllRestartsFailedError as exc:
                rec = exc
            handle(item, rec)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(item, pool.submit(_run_trial_safe, config, *item)) for item in todo]
            for item, fut in futures:
                handle(item, fut.result())

    records = [r for r in store.records() if r.mode == config.mode]
    return records, _summarize(config, records)


def _run_trial_safe(config: ExperimentConfig, dim: int, n: int, trial: int):
    try:
        return run_trial(config, dim, n, trial)
    except AllRestartsFailedError as exc:
        return exc


def perturbation_probability(
    x: PointConfig,
    beta: float,
    trials: int,
    rng: np.random.Generator,
    level: float = 0.95,
) -> tuple[float, tuple[float, float]]:
    """Monte-Carlo estimate that a random beta-ball perturbation stays isotonic.

    Each point moves independently to a uniform draw from the beta-ball around
    it; the estimate comes with a Wilson interval.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if trials < 1:
        raise ValueError("trials must be positive")
    n, d = x.n, x.dim
    good = 0
    for _ in range(trials):
        direction = rng.standard_normal((n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = beta * rng.random(n) ** (1.0 / d)
        y = PointConfig(x.points + direction * radius[:, None])
        ok, _ = is_weakly_isotonic(x, y)
        good += ok
    return good / trials, wilson_interval(good, trials, level)


@dataclass(frozen=True)
class RepeatedEmbeddingResult:
    """Per-point displacements across repeated re-embeddings of one x."""

    displacements: np.ndarray  # (runs_used, n)
    argmax_counts: np.ndarray  # (n,) how often each point attained the run max
    per_run_max: np.ndarray    # (runs_used,)
    failed_runs: int


def repeated_embedding_study(
    x: PointConfig, runs: int, params: SolverParams
) -> RepeatedEmbeddingResult:
    """Re-embed x `runs` times and record each point's aligned displacement."""
    if runs < 1:
        raise ValueError("runs must be positive")
    table = build_table(x)
    seeds = np.random.SeedSequence(params.rng_seed).generate_state(runs, dtype=np.uint64)
    rows = []
    failed = 0
    for seed in seeds:
        report = solve_embedding(table, replace(params, dim=x.dim, rng_seed=int(seed)))
        if not report.success:
            failed += 1
            continue
        transform, _ = procrustes_align(x, report.y)
        aligned = transform.apply_points(report.y.points)
        rows.append(np.linalg.norm(x.points - aligned, axis=1))
    disp = np.array(rows) if rows else np.empty((0, x.n))
    counts = np.zeros(x.n, dtype=np.int64)
    if disp.shape[0]:
        for r in disp.argmax(axis=1):
            counts[r] += 1
    return RepeatedEmbeddingResult(
        displacements=disp,
        argmax_counts=counts,
        per_run_max=disp.max(axis=1) if disp.shape[0] else np.empty(0),
        failed_runs=failed,
    )
