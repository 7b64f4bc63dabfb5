"""Rankings, Kendall distance, gauge fixing, chambers and margin sign crossings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .core import FloatArray, ItemTable, ModelState, ScoringModel, score_items
from .errors import InvalidInputError, TieError

RANK_POLICIES = ("strict", "stable")


@dataclass(frozen=True)
class Ranking:
    """Position map: ``positions[i]`` is the 1-based rank of item i."""

    positions: tuple[int, ...]

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if sorted(pos) != list(range(1, len(pos) + 1)):
            raise InvalidInputError("positions must be a bijection onto 1..n")
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.positions)

    def order(self) -> tuple[int, ...]:
        """Items listed best first."""
        out = [0] * len(self.positions)
        for item, p in enumerate(self.positions):
            out[p - 1] = item
        return tuple(out)


def ranking_from_scores(s: ArrayLike, tie_policy: str = "strict",
                        ids: Sequence[str] | None = None) -> Ranking:
    """Descending-score ranking.

    Under ``strict`` any tie raises TieError.  Under ``stable`` tied items are
    ordered by id (or by index when no ids are given).
    """
    if tie_policy not in RANK_POLICIES:
        raise InvalidInputError(f"rank tie policy must be one of {RANK_POLICIES}")
    s = np.asarray(s, dtype=float)
    n = len(s)
    keys = list(ids) if ids is not None else list(range(n))
    order = sorted(range(n), key=lambda i: (-s[i], keys[i]))
    if tie_policy == "strict":
        tied = [(order[k], order[k + 1]) for k in range(n - 1) if s[order[k]] == s[order[k + 1]]]
        if tied:
            raise TieError(f"tied scores for items {tied}", tied)
    pos = [0] * n
    for rank, item in enumerate(order, start=1):
        pos[item] = rank
    return Ranking(tuple(pos))


def _count_inversions(seq: list) -> int:
    """Merge-sort inversion count, O(n log n)."""
    n = len(seq)
    if n < 2:
        return 0
    buf = list(seq)
    tmp = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            a, b, k = lo, mid, lo
            while a < mid and b < hi:
                if buf[a] <= buf[b]:
                    tmp[k] = buf[a]
                    a += 1
                else:
                    tmp[k] = buf[b]
                    inv += mid - a
                    b += 1
                k += 1
            tmp[k:k + mid - a] = buf[a:mid]
            k += mid - a
            tmp[k:k + hi - b] = buf[b:hi]
        buf, tmp = tmp, buf
        width *= 2
    return inv


def kendall_tau(sigma: Ranking | Sequence[int], pi: Ranking | Sequence[int]) -> int:
    """Number of discordant pairs between two position maps."""
    sp = sigma.positions if isinstance(sigma, Ranking) else tuple(sigma)
    pp = pi.positions if isinstance(pi, Ranking) else tuple(pi)
    if len(sp) != len(pp):
        raise InvalidInputError(f"rankings have different sizes {len(sp)} and {len(pp)}")
    by_sigma = sorted(range(len(sp)), key=lambda i: sp[i])
    return _count_inversions([pp[i] for i in by_sigma])


def gauge_fix(s: ArrayLike) -> FloatArray:
    s = np.asarray(s, dtype=float)
    return s - s.mean()


def chamber_label(s: ArrayLike, tie_policy: str = "strict") -> tuple[int, ...]:
    """Permutation (items best first) naming the chamber of the gauge-fixed scores."""
    return ranking_from_scores(gauge_fix(s), tie_policy).order()


def normal_coordinate(s: ArrayLike, i: int, j: int) -> float:
    """<s, e_i - e_j>."""
    s = np.asarray(s, dtype=float)
    e = np.zeros_like(s)
    e[i] += 1.0
    e[j] -= 1.0
    return float(s @ e)


def boundary_distance(s: ArrayLike, i: int, j: int) -> float:
    """Euclidean distance from s to the hyperplane s_i = s_j."""
    return abs(normal_coordinate(s, i, j)) / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Flip detection along a model path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlipEvent:
    i: int
    j: int
    t: float
    slope_sign: int  # +1: margin i-j goes from negative to positive


@dataclass(frozen=True)
class FlipReport:
    events: tuple[FlipEvent, ...]
    degenerate: tuple[tuple[int, int, float], ...]
    kendall_endpoints: int
    odd_crossing_pairs: int
    grid: int
    notes: tuple[str, ...] = field(default=())

    @property
    def consistent(self) -> bool:
        return self.kendall_endpoints == self.odd_crossing_pairs

    def to_json(self) -> dict:
        return {
            "events": [{"i": e.i, "j": e.j, "t": e.t, "slope_sign": e.slope_sign}
                       for e in self.events],
            "kendall_endpoints": self.kendall_endpoints,
            "odd_crossing_pairs": self.odd_crossing_pairs,
            "consistent": self.consistent,
            "degenerate": [{"i": i, "j": j, "t": t} for i, j, t in self.degenerate],
            "grid": self.grid,
            "notes": list(self.notes),
        }


StatePath = Callable[[float], "ModelState | ScoringModel"]


def _scores_at(path: StatePath, items: ItemTable, t: float) -> FloatArray:
    return score_items(path(t), items)


def _bisect(path: StatePath, items: ItemTable, i: int, j: int, lo: float, hi: float,
            m_lo: float, tol: float = 1e-10, max_iter: int = 60) -> float:
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = _scores_at(path, items, mid)
        m = s[i] - s[j]
        if abs(m) < tol or m == 0.0:
            return mid
        if (m > 0) == (m_lo > 0):
            lo, m_lo = mid, m
        else:
            hi = mid
    return mid


def flip_scan(path: StatePath, items: ItemTable, grid: int = 64,
              pairs: Sequence[tuple[int, int]] | None = None) -> FlipReport:
    """Find margin sign crossings along ``t -> path(t)``, t in [0, 1].

    Each sign change between adjacent grid samples is refined by bisection.
    Exact zeros on the grid are reported as degenerate samples.  A zero run
    flanked by opposite signs still counts as one crossing (placed at the
    middle of the run); one flanked by equal signs only touches zero and is
    not counted.
    """
    if grid < 2:
        raise InvalidInputError("flip scan needs at least 2 grid samples")
    ts = np.linspace(0.0, 1.0, grid)
    S = np.array([_scores_at(path, items, float(t)) for t in ts])
    if pairs is None:
        ii, jj = np.triu_indices(items.n, k=1)
    else:
        ii = np.array([p[0] for p in pairs], dtype=int)
        jj = np.array([p[1] for p in pairs], dtype=int)
    M = S[:, ii] - S[:, jj]  # grid x pairs
    events = []
    degenerate = []
    odd = 0
    zero_rows, zero_cols = np.nonzero(M == 0.0)
    for r, c in zip(zero_rows, zero_cols):
        degenerate.append((int(ii[c]), int(jj[c]), float(ts[r])))
    for c in range(M.shape[1]):
        i, j = int(ii[c]), int(jj[c])
        col = M[:, c]
        crossings = 0
        prev = None  # last grid index with a nonzero margin
        for k in np.flatnonzero(col != 0.0):
            if prev is not None and (col[k] > 0) != (col[prev] > 0):
                if k == prev + 1:
                    t_star = _bisect(path, items, i, j, float(ts[prev]), float(ts[k]),
                                     float(col[prev]))
                else:
                    # exact zeros on the grid between two opposite signs
                    t_star = float(0.5 * (ts[prev + 1] + ts[k - 1]))
                events.append(FlipEvent(i, j, t_star, 1 if col[k] > 0 else -1))
                crossings += 1
            prev = k
        if crossings % 2 == 1:
            odd += 1
    events.sort(key=lambda e: (e.t, e.i, e.j))
    notes = []
    try:
        k_end = kendall_tau(ranking_from_scores(S[0]), ranking_from_scores(S[-1]))
    except TieError:
        k_end = kendall_tau(ranking_from_scores(S[0], "stable"),
                            ranking_from_scores(S[-1], "stable"))
        notes.append("endpoint ranking has ties; stable tiebreak used")
    if pairs is not None:
        notes.append("restricted pair set; endpoint Kendall distance covers all items")
    return FlipReport(tuple(events), tuple(sorted(set(degenerate))), k_end, odd, grid,
                      tuple(notes))


def interpolate_states(a: ScoringModel, b: ScoringModel) -> Callable[[float], ScoringModel]:
    """Straight-line path between two models of the same family in parameter space."""
    if a.family != b.family:
        raise InvalidInputError(f"cannot interpolate {a.family} and {b.family} models")
    pa, pb = a.params(), b.params()
    if any(np.shape(pa[k]) != np.shape(pb[k]) for k in pa):
        raise InvalidInputError("models have different parameter shapes")

    def at(t: float) -> ScoringModel:
        return a.with_params({k: (1.0 - t) * pa[k] + t * pb[k] for k in pa})

    return at
