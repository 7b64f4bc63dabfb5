"""Log-absolute-weight exchange geometry of the linear influence structure.

With u_f = log|w_f| on the active factors, the global influence structure is
the gradient of the convex potential

    Phi(u) = E_p[ log sum_k exp(u_k) b_p^(k) ],

whose Hessian is a Laplacian supported on the factor competition graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from .core import FloatArray, ItemTable, LinearModel, ModelState, PairDistribution
from .errors import GeometryError
from .quadrature import DEFAULT_NODES, gauss_legendre_01


class DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            out.setdefault(self.find(x), []).append(x)
        return sorted(out.values(), key=lambda g: g[0])


@dataclass(frozen=True)
class ActiveFactorContext:
    """Pair gaps restricted to the active factor set.

    ``active`` holds original factor indices; ``gaps`` is (pairs x active)
    with the threshold already applied (sub-threshold gaps are zero).
    """

    active: tuple[int, ...]
    gaps: FloatArray
    weights: FloatArray
    n_factors: int

    def __post_init__(self):
        if not self.active:
            raise GeometryError("active factor set is empty")
        gaps = np.asarray(self.gaps, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if gaps.ndim != 2 or gaps.shape != (len(w), len(self.active)):
            raise GeometryError("gap matrix must be pairs x active factors")
        if len(w) == 0:
            raise GeometryError("empty pair support")
        if np.any(gaps < 0):
            raise GeometryError("gaps must be nonnegative")
        if np.any(gaps[w > 0].sum(axis=1) <= 0):
            raise GeometryError("a supported pair has no positive gap on the active set")
        gaps.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return len(self.active)

    @classmethod
    def from_gaps(cls, gaps: ArrayLike, weights: ArrayLike | None = None) -> "ActiveFactorContext":
        """Context directly from a (pairs x factors) gap matrix, all factors active."""
        gaps = np.atleast_2d(np.asarray(gaps, dtype=float))
        if weights is None:
            weights = np.full(gaps.shape[0], 1.0 / gaps.shape[0])
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        return cls(tuple(range(gaps.shape[1])), gaps, weights, gaps.shape[1])

    @classmethod
    def from_linear(cls, state: ModelState | LinearModel, items: ItemTable,
                    dist: PairDistribution, gap_rtol: float = 1e-12) -> "ActiveFactorContext":
        """Active factors: nonzero weight and a gap above threshold on some
        supported pair.  The threshold is ``gap_rtol`` times the feature scale."""
        model = state.model if isinstance(state, ModelState) else state
        if not isinstance(model, LinearModel):
            raise GeometryError("exchange geometry needs a linear model")
        scale = max(1.0, float(np.max(np.abs(items.features))))
        B = np.abs(items.features[dist.i] - items.features[dist.j])
        B = np.where(B > gap_rtol * scale, B, 0.0)
        supported = dist.weights > 0
        varying = np.any(B[supported] > 0, axis=0)
        active = np.flatnonzero((np.abs(model.w) > 0) & varying)
        if len(active) == 0:
            raise GeometryError("no active factors: every factor has zero weight or never varies")
        return cls(tuple(int(f) for f in active), B[:, active], dist.weights, items.d)

    def log_weights(self, w: ArrayLike) -> FloatArray:
        """u_f = log|w_f| on the active set."""
        w = np.asarray(w, dtype=float)[list(self.active)]
        if np.any(w == 0):
            raise GeometryError("a factor active in this context has zero weight")
        return np.log(np.abs(w))

    def embed(self, v: ArrayLike) -> FloatArray:
        """Place an active-set vector into all factors, zeros elsewhere."""
        out = np.zeros(self.n_factors)
        out[list(self.active)] = v
        return out


def _check_u(ctx: ActiveFactorContext, u: ArrayLike) -> FloatArray:
    u = np.asarray(u, dtype=float)
    if u.shape != (ctx.k,):
        raise GeometryError(f"u must have {ctx.k} entries, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise GeometryError("u must be finite")
    return u


def _all_shares(ctx: ActiveFactorContext, u: FloatArray) -> FloatArray:
    # Shift by the max log weight for stability; gaps carry the support.
    logits = u - u.max()
    E = ctx.gaps * np.exp(logits)
    return E / E.sum(axis=1, keepdims=True)


def softmax_share(ctx: ActiveFactorContext, u: ArrayLike, p: int) -> FloatArray:
    u = _check_u(ctx, u)
    b = ctx.gaps[p]
    if b.sum() <= 0:
        raise GeometryError(f"pair {p} has no active gap")
    e = b * np.exp(u - u.max())
    return e / e.sum()


def potential(ctx: ActiveFactorContext, u: ArrayLike) -> float:
    u = _check_u(ctx, u)
    U = np.broadcast_to(u, ctx.gaps.shape)
    per_pair = logsumexp(U, b=ctx.gaps, axis=1)
    return float(ctx.weights @ per_pair)


def influence_at(ctx: ActiveFactorContext, u: ArrayLike) -> FloatArray:
    """I(u) = E[rho_p(u)], the gradient of the potential."""
    u = _check_u(ctx, u)
    return ctx.weights @ _all_shares(ctx, u)


def jacobian(ctx: ActiveFactorContext, u: ArrayLike) -> FloatArray:
    """J(u) = E[diag(rho) - rho rho^T]."""
    u = _check_u(ctx, u)
    R = _all_shares(ctx, u)
    WR = R * ctx.weights[:, None]
    J = np.diag(WR.sum(axis=0)) - R.T @ WR
    return 0.5 * (J + J.T)


def quadratic_form(ctx: ActiveFactorContext, u: ArrayLike, v: ArrayLike) -> float:
    """v^T J(u) v computed as the mean share-weighted variance of v."""
    u = _check_u(ctx, u)
    v = np.asarray(v, dtype=float)
    R = _all_shares(ctx, u)
    mean = R @ v
    var = np.einsum("pf,pf->p", R, (v[None, :] - mean[:, None]) ** 2)
    return float(ctx.weights @ var)


@dataclass(frozen=True)
class CompetitionGraph:
    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    components: tuple[tuple[int, ...], ...]

    def component_labels(self) -> dict[int, int]:
        return {v: c for c, comp in enumerate(self.components) for v in comp}


def competition_graph(ctx: ActiveFactorContext) -> CompetitionGraph:
    """Factors f, g are joined when some supported pair has both gaps positive.

    Vertices and components use original factor indices."""
    S = (ctx.gaps[ctx.weights > 0] > 0).astype(float)
    co = S.T @ S
    dsu = DisjointSet(ctx.k)
    edges = []
    for a in range(ctx.k):
        for b in range(a + 1, ctx.k):
            if co[a, b] > 0:
                edges.append((ctx.active[a], ctx.active[b]))
                dsu.union(a, b)
    comps = tuple(tuple(ctx.active[x] for x in g) for g in dsu.groups())
    return CompetitionGraph(ctx.active, tuple(edges), comps)


def _local_components(ctx: ActiveFactorContext) -> list[list[int]]:
    pos = {f: a for a, f in enumerate(ctx.active)}
    return [[pos[f] for f in comp] for comp in competition_graph(ctx).components]


@dataclass(frozen=True)
class EnergyIdentity:
    lhs: float
    rhs: float
    rhs_coarse: float
    quad_error: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def holds(self, atol: float = 1e-8, rtol: float = 1e-6) -> bool:
        return (self.gap <= max(atol, rtol * abs(self.lhs))
                and self.lhs >= -1e-10 and self.rhs >= -1e-10)


def energy_identity(ctx: ActiveFactorContext, u: ArrayLike, u_prime: ArrayLike,
                    nodes: int = DEFAULT_NODES) -> EnergyIdentity:
    """<du, I(u') - I(u)> against the path integral of du^T J du.

    The right side uses Gauss-Legendre with ``nodes`` and ``2*nodes``; the
    finer value is returned and the discrepancy kept as ``quad_error``.
    """
    u = _check_u(ctx, u)
    up = _check_u(ctx, u_prime)
    du = up - u
    lhs = float(du @ (influence_at(ctx, up) - influence_at(ctx, u)))

    def rule(n):
        t, w = gauss_legendre_01(n)
        return float(sum(wk * quadratic_form(ctx, u + tk * du, du) for tk, wk in zip(t, w)))

    coarse, fine = rule(nodes), rule(2 * nodes)
    return EnergyIdentity(lhs, fine, coarse, abs(fine - coarse))


@dataclass(frozen=True)
class RigidityVerdict:
    zero_exchange: bool
    componentwise_constant: bool
    max_exchange: float
    max_spread: float
    energy: float
    tol: float

    @property
    def agree(self) -> bool:
        return self.zero_exchange == self.componentwise_constant

    def to_json(self) -> dict:
        return {
            "zero_exchange": self.zero_exchange,
            "componentwise_constant": self.componentwise_constant,
            "agree": self.agree,
            "max_exchange": self.max_exchange,
            "max_spread": self.max_spread,
            "energy": self.energy,
            "tol": self.tol,
        }


def rigidity_check(ctx: ActiveFactorContext, u: ArrayLike, u_prime: ArrayLike,
                   tol: float = 1e-9) -> RigidityVerdict:
    """Compare the zero-exchange verdict with the componentwise-constant
    verdict on du; the two should coincide."""
    u = _check_u(ctx, u)
    up = _check_u(ctx, u_prime)
    du = up - u
    max_exchange = float(np.max(np.abs(influence_at(ctx, up) - influence_at(ctx, u))))
    spreads = [float(np.ptp(du[c])) for c in _local_components(ctx)]
    max_spread = max(spreads)
    energy = energy_identity(ctx, u, up).lhs
    return RigidityVerdict(max_exchange <= tol, max_spread <= tol, max_exchange,
                           max_spread, energy, tol)


def geometry_report(ctx: ActiveFactorContext, u: ArrayLike, u_prime: ArrayLike | None = None,
                    tol: float = 1e-9, nodes: int = DEFAULT_NODES) -> dict:
    u = _check_u(ctx, u)
    up = u if u_prime is None else _check_u(ctx, u_prime)
    graph = competition_graph(ctx)
    energy = energy_identity(ctx, u, up, nodes)
    rig = rigidity_check(ctx, u, up, tol)
    report = {
        "active_factors": list(ctx.active),
        "components": [list(c) for c in graph.components],
        "edges": [list(e) for e in graph.edges],
        "u": u.tolist(),
        "potential": potential(ctx, u),
        "I": influence_at(ctx, u).tolist(),
        "jacobian": jacobian(ctx, u).tolist(),
        "energy": {"lhs": energy.lhs, "rhs": energy.rhs, "quad_error": energy.quad_error},
        "rigidity": rig.to_json(),
    }
    if u_prime is not None:
        report["u_prime"] = up.tolist()
        report["I_prime"] = influence_at(ctx, up).tolist()
    return report
