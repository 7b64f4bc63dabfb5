"""Exact linear margin ledger: factor contributions, L1 shares, global
influence structure and Influence Exchange."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .core import (
    FloatArray,
    ItemTable,
    LinearModel,
    ModelState,
    PairDistribution,
)
from .errors import InvalidInputError, UninformativePairError


def factor_contributions(w: ArrayLike, items: ItemTable, i: int, j: int) -> FloatArray:
    """Per-factor terms w_f (x_if - x_jf); they sum to the margin s_i - s_j."""
    w = np.asarray(w, dtype=float)
    if w.shape != (items.d,):
        raise InvalidInputError(f"weight vector has shape {w.shape}, items have {items.d} factors")
    return w * (items.features[i] - items.features[j])


def share_rule(efforts: ArrayLike) -> FloatArray | None:
    """L1 budget a_f / sum(a).  Returns None when the total is zero."""
    a = np.asarray(efforts, dtype=float)
    if np.any(a < 0):
        raise InvalidInputError("efforts must be nonnegative")
    total = a.sum()
    if total <= 0:
        return None
    return a / total


def influence_share(contributions: ArrayLike) -> FloatArray | None:
    """Local influence shares |c_f| / sum|c|, or None on an uninformative pair."""
    return share_rule(np.abs(np.asarray(contributions, dtype=float)))


def refine_effort(efforts: ArrayLike, k: int, split: tuple[float, float]) -> FloatArray:
    """Shares of the effort vector after splitting coordinate k into (r, q).

    The refined coordinates get (r/a_k) and (q/a_k) of the parent share, or
    zero each when a_k = 0; every other coordinate keeps its share.
    """
    a = np.asarray(efforts, dtype=float)
    r, q = (float(v) for v in split)
    if r < 0 or q < 0:
        raise InvalidInputError("split parts must be nonnegative")
    if abs(r + q - a[k]) > 1e-12 * max(1.0, abs(a[k])):
        raise InvalidInputError(f"split {r}+{q} does not sum to effort {a[k]}")
    parent = share_rule(a)
    if parent is None:
        raise InvalidInputError("effort vector is all zero")
    if a[k] > 0:
        block = [r / a[k] * parent[k], q / a[k] * parent[k]]
    else:
        block = [0.0, 0.0]
    return np.concatenate([parent[:k], block, parent[k + 1:]])


@dataclass(frozen=True)
class LocalDecomposition:
    i: int
    j: int
    contributions: FloatArray
    margin: float
    effort: float
    shares: FloatArray | None

    @property
    def informative(self) -> bool:
        return self.shares is not None


def local_decomposition(w: ArrayLike, items: ItemTable, i: int, j: int) -> LocalDecomposition:
    c = factor_contributions(w, items, i, j)
    return LocalDecomposition(i, j, c, float(c.sum()), float(np.abs(c).sum()), influence_share(c))


def _linear_weights(state: ModelState | LinearModel) -> FloatArray:
    model = state.model if isinstance(state, ModelState) else state
    if not isinstance(model, LinearModel):
        raise InvalidInputError(
            f"linear ledger needs a linear model, got {model.family}; "
            "use path attribution for nonlinear models")
    return model.w


def pair_shares(state: ModelState | LinearModel, items: ItemTable,
                dist: PairDistribution) -> FloatArray:
    """Share matrix (pairs x factors) over the support of ``dist``."""
    w = _linear_weights(state)
    if w.shape[0] != items.d:
        raise InvalidInputError(f"model has {w.shape[0]} factors, items have {items.d}")
    C = (items.features[dist.i] - items.features[dist.j]) * w
    A = np.abs(C)
    Z = A.sum(axis=1)
    bad = np.flatnonzero(Z <= 0)
    if len(bad):
        p = (int(dist.i[bad[0]]), int(dist.j[bad[0]]))
        raise UninformativePairError(
            f"pair {p} has zero effort (Z=0) but positive weight in the distribution", p)
    return A / Z[:, None]


def global_influence(state: ModelState | LinearModel, items: ItemTable,
                     dist: PairDistribution) -> FloatArray:
    """I_f: the distribution-weighted mean of the local shares."""
    R = pair_shares(state, items, dist)
    return dist.weights @ R


@dataclass(frozen=True)
class InfluenceReport:
    labels: tuple[str, ...]
    influence: FloatArray
    exchange: FloatArray | None = None
    influence_before: FloatArray | None = None
    pairs_evaluated: int = 0

    def to_json(self) -> dict:
        return {
            "state": list(self.labels) if len(self.labels) > 1 else self.labels[0],
            "I": self.influence.tolist(),
            "I_before": None if self.influence_before is None else self.influence_before.tolist(),
            "exchange": None if self.exchange is None else self.exchange.tolist(),
            "pairs_evaluated": self.pairs_evaluated,
        }


def influence_report(state: ModelState, items: ItemTable, dist: PairDistribution) -> InfluenceReport:
    return InfluenceReport((state.label,), global_influence(state, items, dist),
                           pairs_evaluated=len(dist))


def influence_exchange(state_a: ModelState, state_b: ModelState, items: ItemTable,
                       dist: PairDistribution) -> InfluenceReport:
    """Exchange I(b) - I(a) over a shared pair distribution."""
    before = global_influence(state_a, items, dist)
    after = global_influence(state_b, items, dist)
    return InfluenceReport((state_a.label, state_b.label), after, after - before, before,
                           pairs_evaluated=len(dist))


LEDGER_HEADER_PREFIX = ("i", "j", "weight", "margin", "Z")


def ledger_rows(state: ModelState | LinearModel, items: ItemTable,
                dist: PairDistribution) -> tuple[list[str], list[list]]:
    """Per-pair ledger: i, j, weight, margin, Z, contrib_1..d, share_1..d."""
    w = _linear_weights(state)
    d = items.d
    header = list(LEDGER_HEADER_PREFIX) + [f"contrib_{f + 1}" for f in range(d)] \
        + [f"share_{f + 1}" for f in range(d)]
    rows = []
    for a, b, weight in dist.pairs:
        dec = local_decomposition(w, items, a, b)
        if not dec.informative:
            raise UninformativePairError(f"pair {(a, b)} has zero effort", (a, b))
        rows.append([a, b, weight, dec.margin, dec.effort, *dec.contributions.tolist(),
                     *dec.shares.tolist()])
    return header, rows


def block_shares(shares: ArrayLike, blocks: Sequence[Sequence[int]]) -> FloatArray:
    """Sum shares over factor blocks (each block a list of factor indices)."""
    shares = np.asarray(shares, dtype=float)
    return np.array([shares[list(b)].sum() for b in blocks])
