"""Point configurations, similarity transforms, and alignment solvers.

A configuration is an ordered n-tuple of points in R^d; index i of one
configuration always corresponds to index i of another.  Alignment quality is
measured per index (max / mean / root-sum-square displacement), optionally
after the best similarity transform has been applied.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog, minimize_scalar
from scipy.spatial import cKDTree

__all__ = [
    "PointConfig",
    "Similarity",
    "DisplacementReport",
    "HausdorffEstimate",
    "distance",
    "hausdorff_to_cube",
    "hausdorff_estimate",
    "apply_similarity",
    "displacement",
    "procrustes_align",
    "cheb_fit_1d",
    "min_dinf_over_similarities",
]

# Grid budget for Hausdorff estimation in d >= 3, where a 1e-3 lattice would
# not fit in memory.
_HAUSDORFF_GRID_BUDGET = 2_000_000


@dataclass(frozen=True)
class PointConfig:
    """An ordered tuple of n points in R^d, stored as an (n, d) float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError(f"points must be a nonempty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self) -> str:
        """Serialize as CSV with header x0,x1,...; 17 significant digits."""
        cols = ",".join(f"x{c}" for c in range(self.dim))
        lines = [cols]
        for row in self.points:
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PointConfig":
        buf = io.StringIO(text)
        header = buf.readline().strip()
        if not header.startswith("x0"):
            raise ValueError("point CSV must start with header x0,x1,...")
        rows = [
            [float(tok) for tok in line.split(",")]
            for line in buf.read().splitlines()
            if line.strip()
        ]
        return cls(np.array(rows))


def distance(p, q) -> float:
    """Euclidean distance between two points of the same dimension."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(np.linalg.norm(p - q))


@dataclass(frozen=True)
class Similarity:
    """A map of R^d multiplying all distances by |scale|.

    Applied as  p -> scale * (orthogonal @ p) + translation.  In one dimension
    the orthogonal part is the trivial [[1.0]] and a negative scale encodes a
    reflection; in d >= 2 scale must be positive and reflections live in the
    orthogonal part (determinant -1 allowed).
    """

    scale: float
    orthogonal: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.orthogonal, dtype=np.float64))
        t = np.atleast_1d(np.asarray(self.translation, dtype=np.float64))
        d = t.shape[0]
        if q.shape != (d, d):
            raise ValueError(f"orthogonal part must be {d}x{d}, got {q.shape}")
        if not np.allclose(q.T @ q, np.eye(d), atol=1e-9):
            raise ValueError("orthogonal part is not orthogonal")
        if self.scale == 0.0:
            raise ValueError("scale must be nonzero")
        if d >= 2 and self.scale < 0.0:
            raise ValueError("scale must be positive for d >= 2")
        object.__setattr__(self, "orthogonal", q)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    @property
    def distance_factor(self) -> float:
        return abs(self.scale)

    @classmethod
    def identity(cls, dim: int) -> "Similarity":
        return cls(1.0, np.eye(dim), np.zeros(dim))

    @classmethod
    def line(cls, a: float, b: float) -> "Similarity":
        """The 1-D map t -> a*t + b."""
        return cls(a, np.eye(1), np.array([b]))

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        return self.scale * (pts @ self.orthogonal.T) + self.translation

    def compose(self, other: "Similarity") -> "Similarity":
        """Return self applied after other: (self.compose(other))(p) = self(other(p))."""
        if self.dim != other.dim:
            raise ValueError("dimension mismatch in composition")
        scale = self.scale * other.scale
        q = self.orthogonal @ other.orthogonal
        t = self.scale * (self.orthogonal @ other.translation) + self.translation
        if self.dim >= 2 and scale < 0:
            # cannot happen: d >= 2 scales are positive
            raise AssertionError
        return Similarity(scale, q, t)


def apply_similarity(transform: Similarity, config: PointConfig) -> PointConfig:
    if transform.dim != config.dim:
        raise ValueError(f"dimension mismatch: transform is {transform.dim}-D, config is {config.dim}-D")
    return PointConfig(transform.apply_points(config.points))


@dataclass(frozen=True)
class DisplacementReport:
    """Per-index displacement summary between two equally sized configurations."""

    d_inf: float  # max_i |x_i - y_i|
    d_1: float    # mean_i |x_i - y_i|
    d_2: float    # sqrt(sum_i |x_i - y_i|^2)


def displacement(x: PointConfig, y: PointConfig) -> DisplacementReport:
    if x.n != y.n or x.dim != y.dim:
        raise ValueError(f"size mismatch: ({x.n},{x.dim}) vs ({y.n},{y.dim})")
    norms = np.linalg.norm(x.points - y.points, axis=1)
    return DisplacementReport(
        d_inf=float(norms.max()),
        d_1=float(norms.mean()),
        d_2=float(math.sqrt(float((norms**2).sum()))),
    )


class HausdorffEstimate(NamedTuple):
    value: float
    resolution: float
    error_bound: float  # true value lies in [value, value + error_bound]
    exact: bool


def hausdorff_estimate(x: PointConfig, resolution: Optional[float] = None) -> HausdorffEstimate:
    """One-sided Hausdorff distance from [0,1]^d to the configuration.

    The smallest alpha such that every point of the cube is within alpha of
    some configuration point.  Exact in one dimension via sorted gaps; in
    d >= 2 estimated on a regular lattice of spacing h, which undershoots the
    true value by at most h*sqrt(d)/2.
    """
    pts = x.points
    d = x.dim
    if d == 1:
        s = np.sort(pts[:, 0])
        gaps = np.diff(s)
        interior = float(gaps.max() / 2.0) if gaps.size else 0.0
        value = max(float(s[0] - 0.0), float(1.0 - s[-1]), interior)
        return HausdorffEstimate(value, 0.0, 0.0, True)
    if resolution is None:
        m = int(round(1.0 / 1e-3)) + 1 if d == 2 else max(2, int(_HAUSDORFF_GRID_BUDGET ** (1.0 / d)))
    else:
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        m = max(2, int(round(1.0 / resolution)) + 1)
    h = 1.0 / (m - 1)
    axes = [np.linspace(0.0, 1.0, m)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    tree = cKDTree(pts)
    dists, _ = tree.query(grid, k=1, workers=-1)
    return HausdorffEstimate(float(dists.max()), h, h * math.sqrt(d) / 2.0, False)


def hausdorff_to_cube(x: PointConfig, resolution: Optional[float] = None) -> float:
    """Convenience wrapper for hausdorff_estimate returning just the value."""
    return hausdorff_estimate(x, resolution).value


def procrustes_align(x: PointConfig, y: PointConfig) -> tuple[Similarity, DisplacementReport]:
    """Least-squares alignment of y onto x over similarity transforms.

    Closed form: center both configurations, SVD the cross-covariance for the
    orthogonal part (improper rotations allowed), then the optimal positive
    scale and translation.  Minimizes the root-sum-square displacement; the
    returned report is for x versus the transformed y.
    """
    if x.n != y.n or x.dim != y.dim:
        raise ValueError("configurations must have matching shape")
    if x.n < 2:
        raise ValueError("need at least two points")
    X = x.points
    Y = y.points
    xbar = X.mean(axis=0)
    ybar = Y.mean(axis=0)
    X0 = X - xbar
    Y0 = Y - ybar
    ynorm2 = float((Y0**2).sum())
    if ynorm2 == 0.0:
        raise ValueError("degenerate y: all points coincide, scale undefined")
    C = X0.T @ Y0
    U, sing, Vt = np.linalg.svd(C)
    Q = U @ Vt
    s = float(sing.sum() / ynorm2)
    if s <= 0.0:
        s = np.finfo(float).tiny  # pathological: x degenerate or orthogonal cross-covariance
    if x.dim == 1:
        transform = Similarity.line(s * Q[0, 0], float(xbar[0] - s * Q[0, 0] * ybar[0]))
    else:
        t = xbar - s * (Q @ ybar)
        transform = Similarity(s, Q, t)
    return transform, displacement(x, apply_similarity(transform, y))


def cheb_fit_1d(x: PointConfig, y: PointConfig) -> tuple[Similarity, float]:
    """Globally optimal minimax affine fit of 1-D y onto 1-D x.

    Solves min over (a, b) of max_i |x_i - (a*y_i + b)| as a linear program,
    with a free in sign, so both orientations of y are covered.  The returned
    residual is the exact minimum of the max displacement over all 1-D affine
    maps of y.
    """
    if x.dim != 1 or y.dim != 1:
        raise ValueError("cheb_fit_1d requires one-dimensional configurations")
    if x.n != y.n:
        raise ValueError("configurations must have equal length")
    if x.n < 2:
        raise ValueError("need at least two points")
    xv = x.points[:, 0]
    yv = y.points[:, 0]
    n = x.n
    # variables (a, b, r): minimize r s.t. |x_i - a y_i - b| <= r
    A_ub = np.block([
        [-yv[:, None], -np.ones((n, 1)), -np.ones((n, 1))],
        [yv[:, None], np.ones((n, 1)), -np.ones((n, 1))],
    ])
    b_ub = np.concatenate([-xv, xv])
    res = linprog(
        c=[0.0, 0.0, 1.0],
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"minimax line fit LP failed: {res.message}")
    a, b, r = res.x
    if a == 0.0:
        a = np.finfo(float).tiny  # keep the transform a genuine similarity
    return Similarity.line(float(a), float(b)), float(r)


def _refine_minimax(x: np.ndarray, y: np.ndarray, transform: Similarity, iterations: int) -> float:
    """Heuristic coordinate descent over (scale, translation), orthogonal part fixed.

    Returns the best max-displacement found; does not certify a minimum.
    """
    Qy = y @ transform.orthogonal.T
    s = transform.scale
    t = transform.translation.copy()

    def objective(s_, t_):
        return float(np.linalg.norm(x - (s_ * Qy + t_), axis=1).max())

    best = objective(s, t)
    for _ in range(iterations):
        improved = False
        r = minimize_scalar(lambda v: objective(v, t), bracket=(s * 0.5, s, s * 1.5))
        if r.fun < best - 1e-15:
            s, best, improved = float(r.x), float(r.fun), True
        for c in range(t.shape[0]):
            def obj_c(v, c=c):
                tt = t.copy()
                tt[c] = v
                return objective(s, tt)
            r = minimize_scalar(obj_c, bracket=(t[c] - 0.1, t[c], t[c] + 0.1))
            if r.fun < best - 1e-15:
                t[c], best, improved = float(r.x), float(r.fun), True
        if not improved:
            break
    return best


def min_dinf_over_similarities(
    x: PointConfig, y: PointConfig, refine_iterations: int = 200
) -> tuple[float, float]:
    """Bracket min over similarities A of the max displacement between x and A*y.

    Exact in one dimension (minimax line fit covers both orientations).  In
    d >= 2 the upper bound comes from Procrustes alignment refined by local
    coordinate descent, and the lower bound is the trivial 0; certified lower
    bounds for special instances come from the constructions module.
    """
    if x.n != y.n or x.dim != y.dim:
        raise ValueError("configurations must have matching shape")
    if x.dim == 1:
        _, r = cheb_fit_1d(x, y)
        return r, r
    transform, report = procrustes_align(x, y)
    upper = report.d_inf
    if refine_iterations > 0:
        upper = min(upper, _refine_minimax(x.points, y.points, transform, refine_iterations))
    return 0.0, upper
