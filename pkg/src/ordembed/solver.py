"""Reconstruct a configuration from its triplet table by hinge-loss descent.

The objective is the margin-1 hinge on squared distances,

    sum over oriented triples of  max(0, 1 - (|y_far - y_i|^2 - |y_near - y_i|^2)),

where each table entry orients (far, near) so that driving the term to zero
enforces the recorded comparison sign.  A run counts as a success only when
every strict sign holds in the final configuration, which is checked directly
rather than through the loss (satisfaction needs margin > 0, not >= 1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .geometry import PointConfig, procrustes_align
from .triplets import SIGN_EQ, TripletTable, _triple_indices, build_table, table_size

__all__ = [
    "SolverParams",
    "SolveReport",
    "RestartRecord",
    "AllRestartsFailedError",
    "hinge_loss",
    "hinge_gradient",
    "solve_embedding",
    "worst_of_restarts",
]

# Strict-inequality tolerance for declaring a comparison satisfied.
SATISFACTION_TOL = 1e-12


class AllRestartsFailedError(RuntimeError):
    """Raised when no restart of the embedding solver satisfied the table."""


@dataclass(frozen=True)
class SolverParams:
    """Knobs for the hinge-descent solver.

    batch_size None gives one full-gradient pass per epoch (with the
    satisfaction check free as a byproduct); an integer gives shuffled
    minibatches whose gradients are averaged.  scale_search turns on an exact
    per-epoch line search over one global scale factor, without which plain
    descent must grow the configuration to ~1/sqrt(min margin) by tiny steps.
    init "ordinal" (1-D only) seeds from the table itself: order recovery via
    betweenness plus a max-slack linear program on the anchored rankings.
    """

    dim: int = 2
    learning_rate: float = 0.1
    lr_decay: float = 0.999
    batch_size: Optional[int] = None
    max_epochs: int = 2000
    restarts: int = 10
    rng_seed: Optional[int] = None
    satisfaction_check_period: int = 1
    init_box: tuple[float, float] = (0.0, 1.0)
    init: str = "random"  # "random" | "ordinal"
    optimizer: str = "adam"  # "adam" | "sgd"
    scale_search: bool = True
    strict_ties: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.satisfaction_check_period < 1:
            raise ValueError("satisfaction_check_period must be >= 1")
        if self.init not in ("random", "ordinal"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solver run."""

    y: PointConfig
    satisfied: int
    epochs_used: int
    final_loss: float
    success: bool
    seed: Optional[int] = None


def _oriented(table: TripletTable) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(anchor, far, near, eq_mask) with far/near chosen so each non-EQ entry
    wants |y_far - y_i| > |y_near - y_i|."""
    ii, jj, kk = _triple_indices(table.n)
    s = table.signs
    far = np.where(s > 0, jj, kk)
    near = np.where(s > 0, kk, jj)
    return ii, far, near, s == SIGN_EQ


def _squared_diffs(pts: np.ndarray, ii, far, near) -> np.ndarray:
    df = pts[ii] - pts[far]
    dn = pts[ii] - pts[near]
    return (df * df).sum(axis=1) - (dn * dn).sum(axis=1)


def hinge_loss(y: PointConfig, table: TripletTable, strict_ties: bool = False) -> float:
    """Margin-1 hinge loss of a configuration against a triplet table.

    EQ entries are excluded by default; with strict_ties they contribute the
    squared difference of the two squared distances.
    """
    if y.n != table.n:
        raise ValueError("configuration size does not match table")
    ii, far, near, eq = _oriented(table)
    diff = _squared_diffs(y.points, ii, far, near)
    loss = float(np.maximum(0.0, 1.0 - diff[~eq]).sum())
    if strict_ties and eq.any():
        loss += float((diff[eq] ** 2).sum())
    return loss


def hinge_gradient(y: PointConfig, table: TripletTable, strict_ties: bool = False) -> np.ndarray:
    """Analytic subgradient of hinge_loss in all n*d coordinates."""
    if y.n != table.n:
        raise ValueError("configuration size does not match table")
    pts = y.points
    n, d = pts.shape
    ii, far, near, eq = _oriented(table)
    df = pts[ii] - pts[far]
    dn = pts[ii] - pts[near]
    diff = (df * df).sum(axis=1) - (dn * dn).sum(axis=1)
    act = (~eq) & (1.0 - diff > 0.0)
    g = np.zeros((n, d))
    _accumulate(g, ii[act], far[act], near[act], 2.0 * df[act], -2.0 * dn[act])
    if strict_ties and eq.any():
        w = (2.0 * diff[eq])[:, None]
        _accumulate(g, ii[eq], far[eq], near[eq], -w * df[eq], w * dn[eq])
    return g


def _accumulate(g: np.ndarray, ii, far, near, gf, gn) -> None:
    """Scatter-add per-triple gradients (gf to far, gn to near, -(gf+gn) to anchors)."""
    n, d = g.shape
    gi = -gf - gn
    for c in range(d):
        g[:, c] += np.bincount(far, weights=gf[:, c], minlength=n)
        g[:, c] += np.bincount(near, weights=gn[:, c], minlength=n)
        g[:, c] += np.bincount(ii, weights=gi[:, c], minlength=n)


def _ordinal_order(table: TripletTable) -> Optional[np.ndarray]:
    """Recover the left-to-right order of a 1-D configuration from its table.

    In the interval, betweenness is a function of triplet comparisons: x_k lies
    between x_i and x_j exactly when d(i,j) >= d(i,k) and d(i,j) >= d(j,k).
    A point between no pair is an endpoint, and anchoring comparisons at an
    endpoint sorts the rest.  Returns point indices left to right, or None if
    the table does not look like a tie-free 1-D order.
    """
    n = table.n
    ii, jj, kk = _triple_indices(n)
    C = np.zeros((n, n, n), dtype=np.int8)  # C[i,j,k] = sign(d(i,j) - d(i,k))
    C[ii, jj, kk] = table.signs
    C[ii, kk, jj] = -table.signs
    idx = np.arange(n)
    endpoint = None
    for k in range(n):
        M = C[:, :, k]
        between = (M >= 0) & (M.T >= 0)
        between[k, :] = False
        between[:, k] = False
        between[idx, idx] = False
        if not between.any():
            endpoint = k
            break
    if endpoint is None:
        return None
    farther = (C[endpoint] == 1).sum(axis=1)
    farther[endpoint] = -1
    if sorted(farther[idx != endpoint]) != list(range(n - 1)):
        return None  # anchored comparisons at the endpoint are not a total order
    return np.argsort(farther, kind="stable")


def _anchor_rankings(table: TripletTable) -> Optional[np.ndarray]:
    """(n, n-1) array: for each anchor, the other points sorted by distance.

    None if some anchor's comparisons are not a strict total order.
    """
    n = table.n
    ii, jj, kk = _triple_indices(n)
    block = table_size(n) // n
    out = np.empty((n, n - 1), dtype=np.int64)
    for i in range(n):
        lo = i * block
        s = table.signs[lo:lo + block]
        wins = np.bincount(jj[lo:lo + block][s > 0], minlength=n)
        wins += np.bincount(kk[lo:lo + block][s < 0], minlength=n)
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        w = wins[others]
        if sorted(w) != list(range(n - 1)):
            return None
        out[i] = others[np.argsort(w, kind="stable")]
    return out


def _ordinal_lp_positions(table: TripletTable) -> Optional[np.ndarray]:
    """Feasible 1-D positions from the table alone, or None.

    Once the left-to-right order is known, each anchored comparison
    |p_i - p_a| < |p_i - p_b| is the linear inequality
    sign(p_a - p_b) * (p_a + p_b - 2 p_i) < 0, and by transitivity the
    adjacent pairs of each anchor's distance ranking imply the rest.  A
    max-slack linear program over those O(n^2) rows, with the outermost points
    pinned to 0 and 1, lands strictly inside the feasible region.
    """
    n = table.n
    order = _ordinal_order(table)
    if order is None:
        return None
    ranking = _anchor_rankings(table)
    if ranking is None:
        return None
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[order] = np.arange(n)

    anchors = np.repeat(np.arange(n), n - 2)
    a = ranking[:, :-1].ravel()  # closer of each adjacent pair
    b = ranking[:, 1:].ravel()   # farther
    sigma = np.where(rank_of[a] > rank_of[b], 1.0, -1.0)
    rows = anchors.size
    # columns 0..n-1 are positions, column n is the slack
    r = np.arange(rows)
    data = np.concatenate([sigma, sigma, -2.0 * sigma, np.ones(rows)])
    rix = np.concatenate([r, r, r, r])
    cix = np.concatenate([a, b, anchors, np.full(rows, n)])
    # keep the recovered order strict as well
    oa, ob = order[:-1], order[1:]
    r2 = rows + np.arange(n - 1)
    data = np.concatenate([data, np.ones(n - 1), -np.ones(n - 1), np.ones(n - 1)])
    rix = np.concatenate([rix, r2, r2, r2])
    cix = np.concatenate([cix, oa, ob, np.full(n - 1, n)])
    A_ub = sparse.coo_matrix((data, (rix, cix)), shape=(rows + n - 1, n + 1))

    bounds = [(0.0, 1.0)] * n + [(0.0, 1.0)]
    bounds[order[0]] = (0.0, 0.0)
    bounds[order[-1]] = (1.0, 1.0)
    c = np.zeros(n + 1)
    c[n] = -1.0
    res = linprog(c, A_ub=A_ub.tocsr(), b_ub=np.zeros(rows + n - 1), bounds=bounds, method="highs")
    if not res.success or res.x[n] <= 0.0:
        return None
    return res.x[:n]


def _scale_line_search(diff: np.ndarray) -> float:
    """Best multiplier u for the squared scale: loss(u) = sum max(0, 1 - u*diff)
    is convex piecewise linear in u, so probing breakpoint quantiles is enough."""
    pos = diff[diff > SATISFACTION_TOL]
    if pos.size == 0:
        return 1.0
    cands = 1.0 / np.quantile(pos, [0.0, 0.001, 0.01, 0.05, 0.1, 0.25, 0.5])
    cands = np.concatenate([[1.0], cands[np.isfinite(cands) & (cands > 0)]])
    losses = np.maximum(0.0, 1.0 - cands[:, None] * diff[None, :]).sum(axis=1)
    return float(cands[np.argmin(losses)])


def _initial_points(table: TripletTable, params: SolverParams, rng) -> np.ndarray:
    lo, hi = params.init_box
    y = rng.uniform(lo, hi, size=(table.n, params.dim))
    if params.init == "ordinal" and params.dim == 1:
        pos = _ordinal_lp_positions(table)
        if pos is None:
            order = _ordinal_order(table)
            if order is not None:
                pos = np.empty(table.n)
                pos[order] = np.linspace(0.0, 1.0, table.n)
        if pos is not None:
            y = (lo + (hi - lo) * pos)[:, None]
    return y


def solve_embedding(table: TripletTable, params: SolverParams) -> SolveReport:
    """Descend the hinge loss until every sign holds, or give up at max_epochs.

    Satisfaction is tested with strict inequality at tolerance 1e-12 and a
    final exact sign re-check against a rebuilt table gates success; failure
    is reported, not raised.  Deterministic given params.rng_seed.
    """
    n = table.n
    if n < 3:
        raise ValueError("table must come from at least three points")
    d = params.dim
    rng = np.random.default_rng(params.rng_seed)
    y = _initial_points(table, params, rng)

    ii, far, near, eq = _oriented(table)
    keep = ~eq
    ii_c, far_c, near_c = ii[keep], far[keep], near[keep]
    T = int(keep.sum())
    if T == 0:
        cfg = PointConfig(y)
        return SolveReport(cfg, 0, 0, hinge_loss(cfg, table, params.strict_ties), True, params.rng_seed)

    lr = params.learning_rate
    m = np.zeros_like(y)
    v = np.zeros_like(y)
    adam_t = 0
    batch = min(params.batch_size, T) if params.batch_size is not None else T
    full_batch = batch >= T
    epochs_used = params.max_epochs
    solved = False

    for epoch in range(params.max_epochs):
        check = (epoch % params.satisfaction_check_period) == 0
        diff = None
        if full_batch or check:
            diff = _squared_diffs(y, ii_c, far_c, near_c)
            if check and bool((diff > SATISFACTION_TOL).all()):
                epochs_used = epoch
                solved = True
                break
            if check and params.scale_search:
                u = _scale_line_search(diff)
                if u != 1.0:
                    c = np.sqrt(u)
                    y *= c
                    m *= c
                    v *= u
                    diff *= u
        if full_batch:
            act = diff < 1.0
            bi, bf, bn = ii_c[act], far_c[act], near_c[act]
            g = np.zeros_like(y)
            _accumulate(g, bi, bf, bn, 2.0 * (y[bi] - y[bf]), -2.0 * (y[bi] - y[bn]))
            g /= T
            adam_t += 1
            _step(y, g, m, v, lr, params.optimizer, adam_t)
        else:
            perm = rng.permutation(T)
            for s in range(0, T, batch):
                b = perm[s:s + batch]
                bi, bf, bn = ii_c[b], far_c[b], near_c[b]
                df = y[bi] - y[bf]
                dn = y[bi] - y[bn]
                act = 1.0 - ((df * df).sum(1) - (dn * dn).sum(1)) > 0.0
                if not act.any():
                    continue
                g = np.zeros_like(y)
                _accumulate(g, bi[act], bf[act], bn[act], 2.0 * df[act], -2.0 * dn[act])
                g /= int(act.sum())
                adam_t += 1
                _step(y, g, m, v, lr, params.optimizer, adam_t)
        lr *= params.lr_decay

    cfg = PointConfig(y)
    diff = _squared_diffs(y, ii_c, far_c, near_c)
    satisfied = int((diff > SATISFACTION_TOL).sum())
    success = satisfied == T
    if success:
        rebuilt = build_table(cfg, table.tie_tolerance)
        success = bool((rebuilt.signs[keep] == table.signs[keep]).all())
    return SolveReport(
        y=cfg,
        satisfied=satisfied,
        epochs_used=epochs_used if solved else params.max_epochs,
        final_loss=hinge_loss(cfg, table, params.strict_ties),
        success=success,
        seed=params.rng_seed,
    )


def _step(y, g, m, v, lr, optimizer: str, t: int) -> None:
    if optimizer == "adam":
        m *= 0.9
        m += 0.1 * g
        v *= 0.999
        v += 0.001 * g * g
        mhat = m / (1.0 - 0.9**t)
        vhat = v / (1.0 - 0.999**t)
        y -= lr * mhat / (np.sqrt(vhat) + 1e-8)
    else:
        y -= lr * g


@dataclass(frozen=True)
class RestartRecord:
    """One restart of worst_of_restarts, with its alignment if it succeeded."""

    seed: int
    report: SolveReport
    aligned: Optional[PointConfig] = None
    d_inf: Optional[float] = None
    d_1: Optional[float] = None


def worst_of_restarts(x: PointConfig, params: SolverParams) -> tuple[PointConfig, list[RestartRecord]]:
    """Re-embed x params.restarts times and keep the worst aligned result.

    Each successful reconstruction is aligned to x by least-squares Procrustes
    and the one with maximum d_inf displacement is returned; failed runs are
    excluded but reported.  Raises AllRestartsFailedError if nothing succeeds.
    """
    if x.dim != params.dim:
        raise ValueError(f"params.dim={params.dim} does not match configuration dim={x.dim}")
    table = build_table(x)
    seeds = [int(s) for s in np.random.SeedSequence(params.rng_seed).generate_state(params.restarts, dtype=np.uint64)]
    records: list[RestartRecord] = []
    for seed in seeds:
        report = solve_embedding(table, replace(params, rng_seed=seed))
        if report.success:
            transform, rep = procrustes_align(x, report.y)
            aligned = PointConfig(transform.apply_points(report.y.points))
            records.append(RestartRecord(seed, report, aligned, rep.d_inf, rep.d_1))
        else:
            records.append(RestartRecord(seed, report))
    successes = [r for r in records if r.aligned is not None]
    if not successes:
        raise AllRestartsFailedError(f"all {params.restarts} restarts failed to satisfy the table")
    worst = max(successes, key=lambda r: r.d_inf)
    return worst.aligned, records
