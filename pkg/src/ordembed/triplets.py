"""Triplet-comparison tables and weak-isotonicity checks.

A triplet comparison answers "is x_j or x_k closer to x_i?".  The table of a
configuration records the three-valued sign of d(x_i,x_j) - d(x_i,x_k) for
every canonical triple (i; j < k), and two configurations are weakly isotonic
when their tables agree entrywise, ties included.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .geometry import PointConfig

__all__ = [
    "TripletTable",
    "table_size",
    "build_table",
    "is_weakly_isotonic",
    "triplet_margin",
    "free_motion_radius",
    "min_margin_per_point",
]

SIGN_LT = -1  # d(x_i, x_j) < d(x_i, x_k): j is closer
SIGN_EQ = 0
SIGN_GT = 1


def table_size(n: int) -> int:
    """Number of canonical triples (i; j < k) on n points: n*(n-1)*(n-2)/2."""
    return n * (n - 1) * (n - 2) // 2


@lru_cache(maxsize=32)
def _triple_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (i, j, k) of all canonical triples in lexicographic order."""
    ju, ku = np.triu_indices(n - 1, k=1)
    ii = np.repeat(np.arange(n), ju.size)
    jj = np.empty(n * ju.size, dtype=np.int64)
    kk = np.empty(n * ju.size, dtype=np.int64)
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        jj[i * ju.size:(i + 1) * ju.size] = others[ju]
        kk[i * ju.size:(i + 1) * ju.size] = others[ku]
    for arr in (ii, jj, kk):
        arr.flags.writeable = False
    return ii, jj, kk


def _distance_matrix(pts: np.ndarray) -> np.ndarray:
    sq = (pts**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _anchor_signs(drow: np.ndarray, i: int, n: int, tie_tolerance: float) -> np.ndarray:
    """Sign block for anchor i: sign of d(i,j) - d(i,k) over canonical pairs j < k."""
    others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
    vals = drow[others]
    ju, ku = np.triu_indices(n - 1, k=1)
    delta = vals[ju] - vals[ku]
    signs = np.sign(delta).astype(np.int8)
    if tie_tolerance > 0.0:
        signs[np.abs(delta) <= tie_tolerance] = SIGN_EQ
    return signs


@dataclass(frozen=True)
class TripletTable:
    """All canonical triplet-comparison signs of one configuration."""

    n: int
    signs: np.ndarray  # int8, length table_size(n), lexicographic (i; j < k)
    tie_tolerance: float = 0.0

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int8)
        if signs.shape != (table_size(self.n),):
            raise ValueError(f"expected {table_size(self.n)} entries for n={self.n}, got {signs.shape}")
        signs = np.ascontiguousarray(signs)
        signs.flags.writeable = False
        object.__setattr__(self, "signs", signs)

    def __len__(self) -> int:
        return self.signs.size

    @property
    def triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _triple_indices(self.n)

    @property
    def eq_count(self) -> int:
        return int((self.signs == SIGN_EQ).sum())

    def sign_of(self, i: int, j: int, k: int) -> int:
        """Sign for an arbitrary distinct triple, canonicalized internally."""
        if len({i, j, k}) != 3:
            raise ValueError("indices must be pairwise distinct")
        flip = 1
        if j > k:
            j, k = k, j
            flip = -1
        ii, jj, kk = _triple_indices(self.n)
        block = table_size(self.n) // self.n
        lo = i * block
        pos = lo + int(np.flatnonzero((jj[lo:lo + block] == j) & (kk[lo:lo + block] == k))[0])
        return int(self.signs[pos]) * flip

    def to_csv(self) -> str:
        ii, jj, kk = _triple_indices(self.n)
        lines = ["i,j,k,sign"]
        for a, b, c, s in zip(ii, jj, kk, self.signs):
            lines.append(f"{a},{b},{c},{s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, tie_tolerance: float = 0.0) -> "TripletTable":
        buf = io.StringIO(text)
        if buf.readline().strip() != "i,j,k,sign":
            raise ValueError("triplet CSV must have header i,j,k,sign")
        rows = [line.split(",") for line in buf.read().splitlines() if line.strip()]
        n = max(int(r[0]) for r in rows) + 1
        if len(rows) != table_size(n):
            raise ValueError("triplet CSV does not cover all canonical triples")
        ii, jj, kk = _triple_indices(n)
        signs = np.empty(len(rows), dtype=np.int8)
        for pos, (a, b, c, s) in enumerate(rows):
            if int(a) != ii[pos] or int(b) != jj[pos] or int(c) != kk[pos]:
                raise ValueError(f"row {pos} is out of canonical order")
            signs[pos] = int(s)
        return cls(n, signs, tie_tolerance)


def build_table(x: PointConfig, tie_tolerance: float = 0.0) -> TripletTable:
    """Record all n*(n-1)*(n-2)/2 triplet comparison signs of a configuration."""
    n = x.n
    if n < 3:
        raise ValueError("triplet tables need at least three points")
    if tie_tolerance < 0.0:
        raise ValueError("tie_tolerance must be nonnegative")
    D = _distance_matrix(x.points)
    block = table_size(n) // n
    signs = np.empty(table_size(n), dtype=np.int8)
    for i in range(n):
        signs[i * block:(i + 1) * block] = _anchor_signs(D[i], i, n, tie_tolerance)
    return TripletTable(n, signs, tie_tolerance)


def is_weakly_isotonic(
    x: PointConfig,
    y: PointConfig,
    tie_tolerance: float = 0.0,
) -> tuple[bool, Optional[tuple[int, int, int]]]:
    """Do x and y agree on every triplet comparison, ties included?

    Returns (True, None) on agreement, else (False, first_violation) with the
    lexicographically first differing canonical triple.
    """
    if x.n != y.n:
        raise ValueError("configurations must have equal length")
    n = x.n
    if n < 3:
        raise ValueError("need at least three points")
    Dx = _distance_matrix(x.points)
    Dy = _distance_matrix(y.points)
    ju, ku = np.triu_indices(n - 1, k=1)
    for i in range(n):
        sx = _anchor_signs(Dx[i], i, n, tie_tolerance)
        sy = _anchor_signs(Dy[i], i, n, tie_tolerance)
        bad = np.flatnonzero(sx != sy)
        if bad.size:
            b = int(bad[0])
            others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
            return False, (i, int(others[ju[b]]), int(others[ku[b]]))
    return True, None


def triplet_margin(x: PointConfig, i: int, j: int, k: int) -> float:
    """Anchored margin |d(x_i,x_j) - d(x_i,x_k)| of one triple."""
    if len({i, j, k}) != 3:
        raise ValueError("indices must be pairwise distinct")
    pts = x.points
    return abs(float(np.linalg.norm(pts[i] - pts[j])) - float(np.linalg.norm(pts[i] - pts[k])))


def min_margin_per_point(x: PointConfig) -> np.ndarray:
    """For each anchor i, the minimum margin over its canonical pairs j < k."""
    n = x.n
    if n < 3:
        raise ValueError("need at least three points")
    D = _distance_matrix(x.points)
    ju, ku = np.triu_indices(n - 1, k=1)
    out = np.empty(n)
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        vals = D[i, others]
        out[i] = np.abs(vals[ju] - vals[ku]).min()
    return out


def free_motion_radius(x: PointConfig, i: int) -> float:
    """Certified radius within which x_i may move without changing the table.

    Half the minimum margin over all canonical triples containing i in any
    role: moving x_i by r changes each anchored distance by less than r and
    hence each margin by less than 2r.  Returns 0 when some triple containing
    i is an exact tie.
    """
    n = x.n
    if n < 3:
        raise ValueError("need at least three points")
    if not 0 <= i < n:
        raise IndexError(f"point index {i} out of range")
    D = _distance_matrix(x.points)
    ju, ku = np.triu_indices(n - 1, k=1)
    others_i = np.concatenate([np.arange(i), np.arange(i + 1, n)])
    vals = D[i, others_i]
    min_margin = float(np.abs(vals[ju] - vals[ku]).min())
    # triples where i is a compared point: anchor a, pair {i, k}
    for a in range(n):
        if a == i:
            continue
        rest = np.array([k for k in range(n) if k != a and k != i])
        margins = np.abs(D[a, i] - D[a, rest])
        min_margin = min(min_margin, float(margins.min()))
    return min_margin / 2.0
