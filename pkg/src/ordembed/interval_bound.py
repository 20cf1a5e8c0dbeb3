"""Constructive 1-D displacement bound for weakly isotonic pairs.

If x fills [0,1] to within alpha (one-sided Hausdorff) and contains both
endpoints, any weakly isotonic y can be aligned by a similarity so that every
point lands within 2*alpha*(log2(1/alpha) + 3/2) of its partner.  The proof
builds a hierarchy of dyadic anchor points; build_dyadic_witness executes
that construction and checks its containment invariants, and
verify_interval_bound checks the final inequality with the exact minimax
alignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .geometry import PointConfig, cheb_fit_1d, hausdorff_to_cube
from .triplets import is_weakly_isotonic

__all__ = [
    "DyadicWitness",
    "WitnessContainmentError",
    "NotIsotonicError",
    "gap_sequence",
    "bound_value",
    "normalize_to_unit",
    "normalize_pair",
    "build_dyadic_witness",
    "verify_interval_bound",
]

_ENDPOINT_ATOL = 1e-12


class WitnessContainmentError(ValueError):
    """An anchor assignment fell outside its certified interval (alpha understated?)."""


class NotIsotonicError(ValueError):
    """The two configurations disagree on some triplet comparison."""


def gap_sequence(k: int) -> list[Fraction]:
    """Exact values a_0..a_k of the recurrence a_0=0, a_1=2, a_j=(a_{j-1}+a_{j-2})/2+2.

    All values are dyadic rationals, so Fractions keep the a_j <= 2j invariant
    assertable without tolerance.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    seq = [Fraction(0), Fraction(2)]
    for j in range(2, k + 1):
        seq.append((seq[j - 1] + seq[j - 2]) / 2 + 2)
    return seq[:k + 1]


def bound_value(alpha: float) -> float:
    """The displacement bound 2*alpha*(log2(1/alpha) + 3/2)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return 2.0 * alpha * (math.log2(1.0 / alpha) + 1.5)


def normalize_to_unit(x: PointConfig) -> PointConfig:
    """Affinely map a 1-D configuration so its extremes sit at 0 and 1."""
    if x.dim != 1:
        raise ValueError("1-D configurations only")
    v = x.points[:, 0]
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        raise ValueError("degenerate configuration: all points coincide")
    return PointConfig((v - lo) / (hi - lo))


def _has_endpoints(x: PointConfig) -> bool:
    v = x.points[:, 0]
    return bool(np.any(np.abs(v) <= _ENDPOINT_ATOL) and np.any(np.abs(v - 1.0) <= _ENDPOINT_ATOL))


def normalize_pair(x: PointConfig, y: PointConfig) -> PointConfig:
    """Affinely renormalize y against x: same coordinate order, min 0, max 1.

    Weak isotonicity in the interval forces y's order to equal x's or its
    reverse (betweenness is determined by triplet comparisons); the reversed
    case is fixed by a reflection before rescaling.
    """
    if x.dim != 1 or y.dim != 1:
        raise ValueError("1-D configurations only")
    if not _has_endpoints(x):
        raise ValueError("x must contain both 0 and 1 (see normalize_to_unit)")
    ok, violation = is_weakly_isotonic(x, y)
    if not ok:
        raise NotIsotonicError(f"configurations disagree at triple {violation}")
    xv = x.points[:, 0]
    yv = y.points[:, 0]
    rx = np.argsort(xv, kind="stable")
    ry = np.argsort(yv, kind="stable")
    if np.array_equal(rx, ry):
        pass
    elif np.array_equal(rx, ry[::-1]):
        yv = -yv
    else:
        raise NotIsotonicError("y is not order-aligned with x despite matching tables")
    lo, hi = float(yv.min()), float(yv.max())
    if hi == lo:
        raise ValueError("degenerate y: all points coincide")
    return PointConfig((yv - lo) / (hi - lo))


@dataclass(frozen=True)
class DyadicWitness:
    """The anchor assignments of the dyadic construction.

    assignments maps each dyadic rational m/2^l (l <= depth, m odd, plus the
    endpoints 0 and 1) to the index of the configuration point standing in for
    it; every assigned point is certified to lie in [m/2^l, m/2^l + a_l*alpha].
    """

    depth: int
    alpha: float
    assignments: dict[Fraction, int]

    def to_json(self) -> str:
        payload = {
            "depth": self.depth,
            "alpha": self.alpha,
            "assignments": {str(q): i for q, i in sorted(self.assignments.items())},
        }
        return json.dumps(payload, indent=2)


def build_dyadic_witness(x: PointConfig, alpha: float, k: Optional[int] = None) -> DyadicWitness:
    """Run the dyadic anchor construction on x at Hausdorff level alpha.

    Level l anchors are chosen as the smallest element of x strictly greater
    than the mean of their two dyadic neighbours' assignments; each must land
    in [m/2^l, m/2^l + a_l*alpha], which is checked and raised on violation.
    Default depth is ceil(log2(1/alpha)), as deep as the certificate goes.
    """
    if x.dim != 1:
        raise ValueError("1-D configurations only")
    if alpha <= 0 or alpha > 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    if not _has_endpoints(x):
        raise ValueError("x must contain both 0 and 1")
    delta = hausdorff_to_cube(x)
    if delta > alpha + _ENDPOINT_ATOL:
        raise ValueError(f"Hausdorff distance {delta} exceeds alpha={alpha}")
    kmax = math.ceil(math.log2(1.0 / alpha))
    if k is None:
        k = kmax
    if k < 0 or k > kmax:
        raise ValueError(f"depth must lie in [0, ceil(log2(1/alpha))] = [0, {kmax}]")

    v = x.points[:, 0]
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    seq = [float(a) for a in gap_sequence(max(k, 1))]

    assignments: dict[Fraction, int] = {
        Fraction(0): int(order[0]),
        Fraction(1): int(order[-1]),
    }
    for level in range(1, k + 1):
        a_l = seq[level]
        for m in range(1, 2**level, 2):
            q = Fraction(m, 2**level)
            left = assignments[q - Fraction(1, 2**level)]
            right = assignments[q + Fraction(1, 2**level)]
            mean = (v[left] + v[right]) / 2.0
            pos = int(np.searchsorted(sorted_v, mean, side="right"))
            if pos >= len(sorted_v):
                raise WitnessContainmentError(f"no element of x greater than {mean} for anchor {q}")
            idx = int(order[pos])
            val = v[idx]
            target = float(q)
            if val < target - _ENDPOINT_ATOL or val > target + a_l * alpha + _ENDPOINT_ATOL:
                raise WitnessContainmentError(
                    f"anchor {q}: x[{idx}]={val} outside [{target}, {target + a_l * alpha}]"
                )
            assignments[q] = idx
    return DyadicWitness(depth=k, alpha=alpha, assignments=assignments)


def verify_interval_bound(x: PointConfig, y: PointConfig) -> tuple[float, float, bool]:
    """Check the displacement bound on a weakly isotonic 1-D pair.

    Returns (achieved, bound, ok) where achieved is the exact minimum over
    similarities of the max displacement (minimax line fit, both orientations
    included) and bound = 2*alpha*(log2(1/alpha)+3/2) for alpha the Hausdorff
    distance of x from [0,1].  ok must come out True on every valid input.
    """
    if x.dim != 1 or y.dim != 1:
        raise ValueError("1-D configurations only")
    if not _has_endpoints(x):
        raise ValueError("x must contain both 0 and 1 (see normalize_to_unit)")
    ok_iso, violation = is_weakly_isotonic(x, y)
    if not ok_iso:
        raise NotIsotonicError(f"configurations disagree at triple {violation}")
    alpha = hausdorff_to_cube(x)
    _, achieved = cheb_fit_1d(x, y)
    bound = bound_value(alpha)
    return achieved, bound, achieved < bound
