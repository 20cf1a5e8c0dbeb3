"""Instance factories for the lower-bound side of the story.

Integer sets with no three-term arithmetic progression and bounded gaps embed
into [0,1] as grid configurations whose anchored triplet margins are at least
1/M.  Each single point may then move by up to 1/(2M) without changing any
comparison, and any joint perturbation below 1/(4M) is weakly isotonic (a
joint move shifts the between-case quantity 2x_k - x_i - x_j by up to four
times the per-point radius, so the often-quoted joint radius 1/(2M) is off by
a factor of two; see the tests).  Pushing two separated consecutive pairs
apart by beta defeats every similarity alignment, because the fixed point of
a similarity cannot sit inside two disjoint intervals.  Also here: the
two-cluster counterexample and the beta-isosceles toolkit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import PointConfig, cheb_fit_1d, hausdorff_to_cube
from .triplets import is_weakly_isotonic

__all__ = [
    "APFreeInstance",
    "AdversarialPair",
    "IsoscelesSearchResult",
    "NoInstanceFoundError",
    "CertificateError",
    "apfree_set",
    "verify_apfree",
    "adversarial_pair",
    "verify_similarity_resistance",
    "clusters_example",
    "vertex_bisector_distance",
    "is_beta_isosceles",
    "isosceles_free_search",
]


class NoInstanceFoundError(RuntimeError):
    """The requested strategy found no valid set within its budget."""


class CertificateError(AssertionError):
    """A lower-bound certificate's hypotheses failed to check out."""


@dataclass(frozen=True)
class APFreeInstance:
    """Integers S in [1, M] with 1, M in S, no 3-term AP, successive gaps <= k_gap."""

    M: int
    k_gap: int
    S: tuple[int, ...]

    def __post_init__(self):
        verify_apfree(self.S, self.M, self.k_gap)

    @property
    def margin(self) -> float:
        return 1.0 / self.M

    @property
    def alpha(self) -> float:
        """Hausdorff-distance bound k_gap / (2M) of the grid embedding."""
        return self.k_gap / (2.0 * self.M)

    @property
    def safe_joint_radius(self) -> float:
        """Largest certified radius for simultaneous perturbation of all points.

        The margin 1/M controls 2x_k - x_i - x_j, which a joint perturbation of
        size r shifts by up to 4r; single points enjoy the larger radius 1/(2M).
        """
        return 1.0 / (4.0 * self.M)

    @property
    def x(self) -> PointConfig:
        return PointConfig(np.array(self.S, dtype=np.float64) / self.M)

    def to_json(self) -> str:
        return json.dumps({"M": self.M, "k_gap": self.k_gap, "S": list(self.S)})

    @classmethod
    def from_json(cls, text: str) -> "APFreeInstance":
        data = json.loads(text)
        return cls(int(data["M"]), int(data["k_gap"]), tuple(int(s) for s in data["S"]))


def verify_apfree(S, M: int, k_gap: int) -> None:
    """Integer-exact verifier: endpoints, strict increase, gap cap, no 3-term AP."""
    S = list(S)
    if len(S) < 2:
        raise ValueError("need at least two elements")
    if S[0] != 1 or S[-1] != M:
        raise ValueError("set must contain both endpoints 1 and M")
    arr = np.array(S, dtype=np.int64)
    if not np.all(np.diff(arr) > 0):
        raise ValueError("set must be strictly increasing")
    if int(np.diff(arr).max()) > k_gap:
        raise ValueError(f"gap {int(np.diff(arr).max())} exceeds k_gap={k_gap}")
    members = set(S)
    for bi in range(1, len(S)):
        b = S[bi]
        for a in S[:bi]:
            if 2 * b - a in members:
                raise ValueError(f"3-term AP found: {a}, {b}, {2 * b - a}")


def _ap_safe_as_largest(c: int, chosen: list[int], members: set[int]) -> bool:
    """Can c be appended as the new largest element without creating an AP?"""
    for b in chosen:
        if 2 * b - c in members:
            return False
    return True


def _ap_safe_anywhere(c: int, members: set[int]) -> bool:
    """Can c be inserted at an arbitrary position without creating an AP?"""
    for s in members:
        if s == c:
            return False
        if 2 * s - c in members:
            return False
        if (c + s) % 2 == 0 and (c + s) // 2 in members:
            return False
    return True


def _exhaustive_search(m_max: int, k_gap: int, node_budget: int) -> Optional[list[int]]:
    """Depth-first max-size search for S from 1 to m_max with bounded gaps.

    Complete when the budget is not exhausted; otherwise returns the best set
    found so far (still fully verified by the caller).
    """
    best: list[int] = []
    nodes = 0

    def recurse(chosen: list[int], members: set[int]) -> None:
        nonlocal best, nodes
        last = chosen[-1]
        if last == m_max:
            if len(chosen) > len(best):
                best = chosen.copy()
            return
        if nodes >= node_budget:
            return
        # even taking every remaining integer cannot beat the best
        if len(chosen) + (m_max - last) <= len(best):
            return
        for c in range(last + 1, min(last + k_gap, m_max) + 1):
            nodes += 1
            if _ap_safe_as_largest(c, chosen, members):
                chosen.append(c)
                members.add(c)
                recurse(chosen, members)
                members.discard(c)
                chosen.pop()

    recurse([1], {1})
    return best if best else None


def _greedy_search(m_max: int, k_gap: int, node_budget: int) -> Optional[list[int]]:
    """Left-to-right smallest-first growth with backtracking on dead ends.

    Stops once the gap window reaches past m_max; the landing point becomes M.
    Backtracking only fires when no AP-safe candidate fits in a window that
    ends strictly below m_max.
    """
    chosen = [1]
    members = {1}
    next_try = [2]  # per-level next candidate
    nodes = 0
    while nodes < node_budget:
        last = chosen[-1]
        if last == m_max:
            return chosen
        placed = False
        c = next_try[-1]
        while c <= min(last + k_gap, m_max):
            nodes += 1
            if _ap_safe_as_largest(c, chosen, members):
                next_try[-1] = c + 1
                chosen.append(c)
                members.add(c)
                next_try.append(c + 1)
                placed = True
                break
            c += 1
        if placed:
            continue
        if last + k_gap >= m_max and len(chosen) > 1:
            return chosen  # cannot reach farther than m_max anyway
        # dead end strictly inside the range: backtrack
        if len(chosen) == 1:
            return None
        members.discard(chosen.pop())
        next_try.pop()
    return chosen if len(chosen) > 1 else None


def _behrend_digits(m_max: int, k_gap: int, node_budget: int) -> Optional[list[int]]:
    """Digit-restricted base-(2b-1) set on its best sphere, gap-repaired.

    Numbers with digits < b in base 2b-1 add without carries, so a fixed
    digit-square-sum shell has no 3-term AP (a sphere contains no midpoint of
    two of its own points).  Shells have large gaps, which are repaired by
    greedily inserting AP-safe integers; the combined set is re-verified.
    """
    span = m_max - 1  # construction runs in [0, span], shifted to [1, m_max] at the end
    if span < 2:
        return None
    best: Optional[list[int]] = None
    for b in range(2, 8):
        base = 2 * b - 1
        ndig = max(1, math.floor(math.log(span + 1, base)))
        digits_list = [[]]
        # enumerate digit vectors of length ndig with digits < b
        values: dict[int, list[int]] = {}
        def gen(pos: int, acc: int, sq: int) -> None:
            if acc > span:
                return
            if pos == ndig:
                values.setdefault(sq, []).append(acc)
                return
            for dig in range(b):
                nxt = acc + dig * base**pos
                if nxt <= span:
                    gen(pos + 1, nxt, sq + dig * dig)
        gen(0, 0, 0)
        shell = max(values.values(), key=len)
        cand = sorted(set(shell) | {0, span})
        members = set(cand)
        # 0 and span may break AP-freeness of the shell: drop conflicting shell points
        pruned = [0]
        pm: set[int] = {0}
        for c in cand[1:]:
            if _ap_safe_as_largest(c, pruned, pm):
                pruned.append(c)
                pm.add(c)
        if pruned[-1] != span:
            continue
        # repair oversized gaps by inserting AP-safe integers, largest gaps first
        members = set(pruned)
        budget = node_budget
        changed = True
        while changed and budget > 0:
            changed = False
            s = sorted(members)
            for lo, hi in zip(s[:-1], s[1:]):
                if hi - lo > k_gap:
                    for c in range(lo + 1, hi):
                        budget -= 1
                        if budget <= 0:
                            break
                        if _ap_safe_anywhere(c, members):
                            members.add(c)
                            changed = True
                            break
                    if budget <= 0:
                        break
        s = sorted(members)
        if max(np.diff(s)) <= k_gap:
            cand_set = [v + 1 for v in s]
            if best is None or len(cand_set) > len(best):
                best = cand_set
    return best


_STRATEGIES = {
    "exhaustive": _exhaustive_search,
    "greedy": _greedy_search,
    "behrend": _behrend_digits,
}


def apfree_set(
    m_max: int,
    k_gap: int,
    strategy: str = "greedy",
    node_budget: int = 2_000_000,
) -> APFreeInstance:
    """Construct a verified AP-free instance reaching from 1 to at most m_max.

    Strategies: "exhaustive" (max-size depth-first search, practical for
    m_max up to ~60), "greedy" (smallest-first growth with backtracking),
    "behrend" (digit-restricted sphere set with greedy gap repair).  Every
    output passes the integer verifier regardless of strategy.
    """
    if k_gap < 2:
        raise ValueError("k_gap must be at least 2")
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    try:
        search = _STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}; options: {sorted(_STRATEGIES)}") from None
    s = search(m_max, k_gap, node_budget)
    m = s[-1] if s else None
    if not s:
        raise NoInstanceFoundError(
            f"no AP-free set with gaps <= {k_gap} reaching ~{m_max} within budget"
        )
    return APFreeInstance(M=int(m), k_gap=k_gap, S=tuple(int(v) for v in s))


@dataclass(frozen=True)
class AdversarialPair:
    """An instance plus the 4-point perturbation defeating similarity alignment."""

    base: APFreeInstance
    beta: float
    y: PointConfig
    moved_pairs: tuple[tuple[int, int], tuple[int, int]]


def _default_pairs(x: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """The two largest disjoint consecutive gaps, ties broken by position."""
    gaps = np.diff(x)
    first = int(np.argmax(gaps))
    rest = [g for g in range(gaps.size) if abs(g - first) >= 2]
    if not rest:
        raise ValueError("no disjoint consecutive pair available")
    second = max(rest, key=lambda g: (gaps[g], -g))
    lo, hi = sorted((first, second))
    return (lo, lo + 1), (hi, hi + 1)


def _build_perturbed(x: np.ndarray, pairs, beta: float) -> np.ndarray:
    y = x.copy()
    for a, b in pairs:
        y[a] -= beta
        y[b] += beta
    return y


def adversarial_pair(
    inst: APFreeInstance,
    beta: float,
    pairs: Optional[tuple[tuple[int, int], tuple[int, int]]] = None,
    search: bool = False,
) -> AdversarialPair:
    """Push two disjoint consecutive pairs apart by beta each.

    Requires 0 <= beta < 1/(2M).  Below beta = 1/(4M) any choice of pairs
    stays weakly isotonic (joint safe radius); above it, triples mixing the
    moved points can flip when their integer margin is exactly 1, so the
    result is always re-checked by a full table comparison.  With search=True,
    candidate pair choices are tried in decreasing-gap order until one checks
    out.  Default pairs: the two largest disjoint consecutive gaps.
    """
    if len(inst.S) < 4:
        raise ValueError("instance too small: need at least 4 points")
    if beta < 0 or beta >= 1.0 / (2 * inst.M):
        raise ValueError(f"beta must lie in [0, 1/(2M)) = [0, {1.0 / (2 * inst.M)})")
    x = inst.x.points[:, 0]
    if pairs is not None:
        candidates = [pairs]
    elif search:
        gaps = np.diff(x)
        ranked = sorted(range(gaps.size), key=lambda g: (-gaps[g], g))
        candidates = [
            ((min(a, b), min(a, b) + 1), (max(a, b), max(a, b) + 1))
            for ai, a in enumerate(ranked)
            for b in ranked[ai + 1:]
            if abs(a - b) >= 2
        ]
    else:
        candidates = [_default_pairs(x)]
    last_violation = None
    for cand in candidates:
        (i, i2), (j, j2) = sorted(cand)
        if i2 != i + 1 or j2 != j + 1 or j <= i + 1:
            raise ValueError("moved pairs must be disjoint consecutive index pairs")
        ycfg = PointConfig(_build_perturbed(x, ((i, i + 1), (j, j + 1)), beta))
        ok, violation = is_weakly_isotonic(inst.x, ycfg)
        if ok:
            return AdversarialPair(base=inst, beta=beta, y=ycfg, moved_pairs=((i, i + 1), (j, j + 1)))
        last_violation = violation
    raise CertificateError(
        f"no admissible pair choice at beta={beta}: last violation {last_violation}"
    )


def verify_similarity_resistance(pair: AdversarialPair) -> float:
    """Certify min over similarities A of max_i |x_i - A y_i| >= beta.

    Checks the hypotheses of the two-interval fixed-point argument: if some
    similarity esteemed every point to within beta, it would have to move y_i
    up and y_{i+1} down in both moved pairs, forcing its unique fixed point
    inside both inflated intervals, which are disjoint.  Cross-checks the
    certified bound against the exact minimax line fit.
    """
    inst = pair.base
    x = inst.x.points[:, 0]
    y = pair.y.points[:, 0]
    (i, i2), (j, j2) = pair.moved_pairs
    beta = pair.beta
    if beta < 0 or beta >= 1.0 / (2 * inst.M):
        raise CertificateError("beta outside [0, 1/(2M))")
    if i2 != i + 1 or j2 != j + 1 or j <= i + 1:
        raise CertificateError("moved pairs are not disjoint consecutive index pairs")
    expected = x.copy()
    for a, b in pair.moved_pairs:
        expected[a] -= beta
        expected[b] += beta
    if not np.array_equal(expected, y):
        raise CertificateError("y does not match the +/-beta perturbation pattern")
    # inflated intervals (x_i - beta, x_{i+1} + beta) must be disjoint
    if not x[j] - beta >= x[i + 1] + beta:
        raise CertificateError("moved-pair intervals overlap after inflation")
    ok, violation = is_weakly_isotonic(inst.x, pair.y)
    if not ok:
        raise CertificateError(f"pair is not weakly isotonic at {violation}")
    _, residual = cheb_fit_1d(inst.x, pair.y)
    if residual < beta * (1.0 - 1e-9) - 1e-12:
        raise CertificateError(
            f"exact minimax alignment {residual} undercuts certified bound {beta}"
        )
    return beta


def clusters_example(n: int, shift: float, seed: int = 0) -> tuple[PointConfig, PointConfig]:
    """Two far-apart clusters that agree on all triplet comparisons.

    x puts n/2 points in [-0.1, 0.1] and n/2 in [0.9, 1.1]; y translates the
    second cluster by shift.  All cross-cluster distances change by the same
    amount, so for shift >= 0 the tables agree while the displacement is
    unbounded in shift.
    """
    if n < 4 or n % 2 != 0:
        raise ValueError("n must be an even integer >= 4")
    rng = np.random.default_rng(seed)
    left = rng.uniform(-0.1, 0.1, size=n // 2)
    right = rng.uniform(0.9, 1.1, size=n // 2)
    x = np.concatenate([left, right])
    y = x.copy()
    y[n // 2:] += shift
    return PointConfig(x), PointConfig(y)


def vertex_bisector_distance(v, a, b) -> float:
    """Distance from vertex v to the perpendicular bisector of segment ab."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    base = float(np.linalg.norm(a - b))
    if base == 0.0:
        raise ValueError("degenerate base: the two base points coincide")
    da2 = float(((v - a) ** 2).sum())
    db2 = float(((v - b) ** 2).sum())
    return abs(da2 - db2) / (2.0 * base)


def is_beta_isosceles(p, q, r, beta: float) -> bool:
    """Is some vertex within beta of the other two vertices' perpendicular bisector?

    A 3-term arithmetic progression on a line is exactly a 0-isosceles triangle
    (its middle point sits on the bisector of the outer two).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return (
        vertex_bisector_distance(p, q, r) <= beta
        or vertex_bisector_distance(q, p, r) <= beta
        or vertex_bisector_distance(r, p, q) <= beta
    )


@dataclass(frozen=True)
class IsoscelesSearchResult:
    points: PointConfig
    hausdorff: float
    restarts_used: int


def _admissible(c: np.ndarray, chosen: np.ndarray, beta: float) -> bool:
    """No triangle formed by c with a chosen pair is beta-isosceles."""
    m = chosen.shape[0]
    if m < 2:
        return True
    dc = np.linalg.norm(chosen - c, axis=1)
    dc2 = dc * dc
    D = np.linalg.norm(chosen[:, None, :] - chosen[None, :, :], axis=-1)
    iu, ju = np.triu_indices(m, k=1)
    dab = D[iu, ju]
    dab2 = dab * dab
    # vertex c against base (a, b)
    if np.any(np.abs(dc2[iu] - dc2[ju]) / (2.0 * dab) <= beta):
        return False
    # vertex a against base (c, b) and vertex b against base (c, a)
    if np.any(np.abs(dab2 - dc2[iu]) / (2.0 * dc[ju]) <= beta):
        return False
    if np.any(np.abs(dab2 - dc2[ju]) / (2.0 * dc[iu]) <= beta):
        return False
    return True


def isosceles_free_search(
    grid_side: int,
    beta: float,
    budget: int = 20,
    seed: int = 0,
    hausdorff_resolution: float = 2e-3,
) -> IsoscelesSearchResult:
    """Randomized greedy search for a beta-isosceles-free subset of the grid.

    Candidates are the grid_side x grid_side lattice points of [0,1]^2; each
    restart inserts them in random order, keeping a point only if it forms no
    beta-isosceles triangle with the points already kept.  Returns the largest
    set found within the restart budget, re-verified exhaustively.  This is an
    exploration heuristic with no optimality claim.
    """
    if grid_side < 2:
        raise ValueError("grid_side must be at least 2")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    axis = np.linspace(0.0, 1.0, grid_side)
    cand = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    best: Optional[np.ndarray] = None
    for _ in range(budget):
        chosen = np.empty((0, 2))
        for idx in rng.permutation(cand.shape[0]):
            c = cand[idx]
            if np.any(np.all(np.abs(chosen - c) < 1e-12, axis=1)):
                continue
            if _admissible(c, chosen, beta):
                chosen = np.vstack([chosen, c])
        if best is None or chosen.shape[0] > best.shape[0]:
            best = chosen
    assert best is not None
    cfg = PointConfig(best)
    for a in range(best.shape[0]):
        for b in range(a + 1, best.shape[0]):
            for c in range(b + 1, best.shape[0]):
                if is_beta_isosceles(best[a], best[b], best[c], beta):
                    raise CertificateError("search produced a beta-isosceles triangle")
    hd = hausdorff_to_cube(cfg, resolution=hausdorff_resolution) if best.shape[0] else 1.0
    return IsoscelesSearchResult(points=cfg, hausdorff=hd, restarts_used=budget)
