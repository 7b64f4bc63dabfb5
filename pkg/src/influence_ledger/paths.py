"""Pairwise attribution for nonlinear scoring models.

Factor f's share of the margin F(x_i) - F(x_j) along a path gamma from x_j
to x_i is the line integral of d_f F(gamma) * gamma_f'.  All supported paths
are polylines, integrated segment by segment with Gauss-Legendre rules.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .core import (
    FloatArray,
    ItemTable,
    LinearModel,
    ModelState,
    PairDistribution,
    ScoringModel,
)
from .errors import AttributionError, InvalidInputError, UninformativePairError
from .ledger import influence_share
from .quadrature import DEFAULT_NODES, gauss_legendre_01, integrate_rect

log = logging.getLogger(__name__)

THREADS_ENV = "INFLUENCE_LEDGER_THREADS"


def completeness_tolerance(total: float) -> float:
    return max(1e-8, 1e-7 * abs(total))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _model(model: ScoringModel | ModelState) -> ScoringModel:
    return model.model if isinstance(model, ModelState) else model


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathSpec:
    kind: str = "straight_line"
    order: tuple[int, ...] | None = None
    waypoints: FloatArray | None = None
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if self.kind not in ("straight_line", "axis_ordered", "piecewise_linear"):
            raise InvalidInputError(f"unknown path kind {self.kind!r}")
        if self.nodes < 2:
            raise InvalidInputError("quadrature order must be >= 2")
        if self.kind == "piecewise_linear":
            if self.waypoints is None:
                raise InvalidInputError("piecewise path needs waypoints")
            wp = np.atleast_2d(np.array(self.waypoints, dtype=float))
            if wp.shape[0] < 2:
                raise InvalidInputError("piecewise path needs at least 2 waypoints")
            wp.setflags(write=False)
            object.__setattr__(self, "waypoints", wp)
        if self.order is not None:
            order = tuple(int(f) for f in self.order)
            if len(set(order)) != len(order) or min(order, default=0) < 0:
                raise InvalidInputError(f"axis order {order} repeats or has negative factors")
            object.__setattr__(self, "order", order)

    @classmethod
    def straight(cls, nodes: int = DEFAULT_NODES) -> "PathSpec":
        return cls("straight_line", nodes=nodes)

    @classmethod
    def axis(cls, order: Sequence[int] | None = None, nodes: int = DEFAULT_NODES) -> "PathSpec":
        return cls("axis_ordered", order=None if order is None else tuple(order), nodes=nodes)

    @classmethod
    def piecewise(cls, waypoints: ArrayLike, nodes: int = DEFAULT_NODES) -> "PathSpec":
        return cls("piecewise_linear", waypoints=np.asarray(waypoints, dtype=float), nodes=nodes)

    @property
    def label(self) -> str:
        if self.kind == "straight_line":
            return "pig"
        if self.kind == "axis_ordered":
            return "axis" if self.order is None else "axis:" + ",".join(map(str, self.order))
        return "piecewise"

    def vertices(self, x_j: FloatArray, x_i: FloatArray) -> FloatArray:
        d = len(x_j)
        if self.kind == "straight_line":
            return np.stack([x_j, x_i])
        if self.kind == "axis_ordered":
            order = tuple(range(d)) if self.order is None else self.order
            if sorted(order) != list(range(d)):
                raise InvalidInputError(f"axis order {order} is not a permutation of 0..{d - 1}")
            v = np.array(x_j, dtype=float)
            out = [v.copy()]
            for f in order:
                v[f] = x_i[f]
                out.append(v.copy())
            return np.stack(out)
        wp = self.waypoints
        if wp.shape[1] != d:
            raise InvalidInputError(f"waypoints have {wp.shape[1]} coordinates, expected {d}")
        scale = 1e-12 * (1.0 + max(np.max(np.abs(x_j)), np.max(np.abs(x_i))))
        if np.max(np.abs(wp[0] - x_j)) > scale or np.max(np.abs(wp[-1] - x_i)) > scale:
            raise InvalidInputError("waypoints must start at x_j and end at x_i")
        out = np.array(wp)
        out[0], out[-1] = x_j, x_i
        return out


def random_piecewise(x_j: ArrayLike, x_i: ArrayLike, rng: np.random.Generator,
                     n_interior: int = 2, spread: float = 1.0,
                     nodes: int = DEFAULT_NODES) -> PathSpec:
    """A piecewise-linear path through random interior waypoints."""
    x_j = np.asarray(x_j, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    inner = rng.normal(scale=spread, size=(n_interior, len(x_j)))
    inner += np.linspace(0, 1, n_interior + 2)[1:-1, None] * (x_i - x_j) + x_j
    return PathSpec.piecewise(np.vstack([x_j, inner, x_i]), nodes=nodes)


@dataclass(frozen=True)
class AttributionResult:
    contributions: FloatArray
    total: float
    residual: float
    semantics: str
    quad_error: float = 0.0
    converged: bool = True

    @property
    def tolerance(self) -> float:
        return completeness_tolerance(self.total)

    def to_json(self) -> dict:
        return {"contrib": self.contributions.tolist(), "total": self.total,
                "residual": self.residual, "quad_error": self.quad_error,
                "converged": self.converged}


def _segment_integrals(model: ScoringModel, verts: FloatArray, n: int) -> FloatArray:
    t, w = gauss_legendre_01(n)
    out = np.zeros(verts.shape[1])
    for a, b in zip(verts[:-1], verts[1:]):
        step = b - a
        if not np.any(step):
            continue
        G = model.gradient(a[None, :] + t[:, None] * step[None, :])
        out += step * (w @ G)
    return out


def path_attribute(model: ScoringModel | ModelState, x_j: ArrayLike, x_i: ArrayLike,
                   path: PathSpec | None = None) -> AttributionResult:
    """Factor contributions to F(x_i) - F(x_j) along ``path`` (default straight line).

    The integral is taken with ``path.nodes`` and twice as many nodes per
    segment; the finer estimate is returned together with the discrepancy.
    """
    model = _model(model)
    path = path or PathSpec.straight()
    x_j = np.asarray(x_j, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    if x_j.shape != (model.dim,) or x_i.shape != (model.dim,):
        raise InvalidInputError(f"endpoints must have {model.dim} coordinates")
    verts = path.vertices(x_j, x_i)
    coarse = _segment_integrals(model, verts, path.nodes)
    fine = _segment_integrals(model, verts, 2 * path.nodes)
    total = float(model.value(x_i) - model.value(x_j))
    quad_err = float(np.max(np.abs(fine - coarse)))
    residual = float(abs(fine.sum() - total))
    tol = completeness_tolerance(total)
    converged = quad_err <= tol and residual <= tol
    if not converged:
        log.warning("path quadrature did not converge: discrepancy %.3g, residual %.3g, tol %.3g",
                    quad_err, residual, tol)
    return AttributionResult(fine, total, residual, path.label, quad_err, converged)


def pig(model: ScoringModel | ModelState, x_j: ArrayLike, x_i: ArrayLike,
        nodes: int = DEFAULT_NODES) -> AttributionResult:
    """Pairwise Integrated Gradients: the straight-line path attribution."""
    return path_attribute(model, x_j, x_i, PathSpec.straight(nodes))


# ---------------------------------------------------------------------------
# Local linearization and the margin function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MidpointResult:
    estimate: float
    exact: float
    error: float


def midpoint_linearize(model: ScoringModel | ModelState, x_i: ArrayLike,
                       x_j: ArrayLike) -> MidpointResult:
    """grad F at the pair midpoint, dotted with x_i - x_j."""
    model = _model(model)
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    estimate = float(model.gradient(0.5 * (x_i + x_j)) @ (x_i - x_j))
    exact = float(model.value(x_i) - model.value(x_j))
    return MidpointResult(estimate, exact, abs(exact - estimate))


def margin_function(model: ScoringModel | ModelState, u: ArrayLike, v: ArrayLike) -> float:
    model = _model(model)
    return float(model.value(np.asarray(u, dtype=float)) - model.value(np.asarray(v, dtype=float)))


def margin_gradient(model: ScoringModel | ModelState, u: ArrayLike, v: ArrayLike) -> FloatArray:
    """Gradient of G(u, v) = F(u) - F(v) in R^{2d}: (grad F(u), -grad F(v))."""
    model = _model(model)
    return np.concatenate([model.gradient(np.asarray(u, dtype=float)),
                           -model.gradient(np.asarray(v, dtype=float))])


# ---------------------------------------------------------------------------
# Interaction curvature
# ---------------------------------------------------------------------------


def mixed_partial(model: ScoringModel | ModelState, f: int, g: int, x: ArrayLike) -> float:
    return _model(model).mixed_partial(f, g, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CurvatureReport:
    max_mixed: FloatArray  # per factor: max over g != f and grid of |d_gf F|
    max_gradient: float
    tolerance: float
    points: int
    sampling: str
    path_independent: tuple[bool, ...] = field(default=())

    @property
    def additive(self) -> bool:
        return all(self.path_independent)

    @property
    def verdict(self) -> str:
        return "factorwise path-independent" if self.additive else "interaction curvature present"

    def to_json(self) -> dict:
        return {"max_mixed": self.max_mixed.tolist(), "max_gradient": self.max_gradient,
                "tolerance": self.tolerance, "points": self.points, "sampling": self.sampling,
                "path_independent": list(self.path_independent), "additive": self.additive,
                "verdict": self.verdict}


MAX_TENSOR_POINTS = 4096


def _curvature_points(lo: FloatArray, hi: FloatArray, grid: int) -> tuple[FloatArray, str]:
    d = len(lo)
    axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
    if grid ** d <= MAX_TENSOR_POINTS:
        return np.array(list(itertools.product(*axes))), "tensor"
    # Too many points for a full grid: scan every coordinate plane through the box centre.
    centre = 0.5 * (lo + hi)
    pts = []
    for f, g in itertools.combinations(range(d), 2):
        for a in axes[f]:
            for b in axes[g]:
                p = centre.copy()
                p[f], p[g] = a, b
                pts.append(p)
    return np.array(pts), "planes"


def curvature_report(model: ScoringModel | ModelState, box: tuple[ArrayLike, ArrayLike],
                     grid: int = 5) -> CurvatureReport:
    """Scan mixed partials over a box and decide the additive regime.

    A factor counts as path-independent when every mixed partial involving
    it stays below 1e-8 * (1 + max|grad F|).  For finite-difference models
    the threshold is raised to the rounding floor of the second differences.
    """
    model = _model(model)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    if lo.shape != (model.dim,) or hi.shape != (model.dim,):
        raise InvalidInputError("box corners must match the model dimension")
    pts, sampling = _curvature_points(np.minimum(lo, hi), np.maximum(lo, hi), max(grid, 1))
    max_mixed = np.zeros(model.dim)
    G = model.gradient(pts)
    max_grad = float(np.max(np.abs(G)))
    for p in pts:
        H = np.abs(model.hessian(p))
        np.fill_diagonal(H, 0.0)
        max_mixed = np.maximum(max_mixed, H.max(axis=0))
    tol = 1e-8 * (1.0 + max_grad)
    if model.derivatives == "fd":
        max_val = float(np.max(np.abs(model.value(pts))))
        tol = max(tol, 1e-6 * (1.0 + max_val))
    return CurvatureReport(max_mixed, max_grad, tol, len(pts), sampling,
                           tuple(bool(m < tol) for m in max_mixed))


@dataclass(frozen=True)
class FluxCheck:
    path_difference: float
    flux: float

    @property
    def discrepancy(self) -> float:
        return abs(self.path_difference - self.flux)


def surface_flux_rect(model: ScoringModel | ModelState, f: int, g: int, x_j: ArrayLike,
                      x_i: ArrayLike, nodes: int = DEFAULT_NODES) -> FluxCheck:
    """Compare the factor-f path difference (g-then-f minus f-then-g) with the
    oriented integral of d_gf F over the rectangle spanned in the (f, g) plane.

    ``x_j`` and ``x_i`` must agree on every coordinate other than f and g.
    """
    model = _model(model)
    x_j = np.asarray(x_j, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    if f == g:
        raise InvalidInputError("flux needs two distinct factors")
    others = [k for k in range(model.dim) if k not in (f, g)]
    if others and np.any(x_j[others] != x_i[others]):
        raise InvalidInputError("corners must differ only in factors f and g")
    a, b, c, d = x_j[f], x_j[g], x_i[f], x_i[g]
    if a == c or b == d:
        return FluxCheck(0.0, 0.0)
    g_first = path_attribute(model, x_j, x_i, PathSpec.axis([g, f, *others], nodes))
    f_first = path_attribute(model, x_j, x_i, PathSpec.axis([f, g, *others], nodes))
    diff = float(g_first.contributions[f] - f_first.contributions[f])

    def integrand(S, R):
        out = np.empty_like(S)
        x = x_j.copy()
        for idx in np.ndindex(S.shape):
            x[f], x[g] = S[idx], R[idx]
            out[idx] = model.mixed_partial(g, f, x)
        return out

    flux = integrate_rect(integrand, a, c, b, d, nodes)
    return FluxCheck(diff, flux)


# ---------------------------------------------------------------------------
# Nonlinear shares and global influence under a chosen semantics
# ---------------------------------------------------------------------------


def nonlinear_shares(attribution: AttributionResult | ArrayLike) -> FloatArray | None:
    c = attribution.contributions if isinstance(attribution, AttributionResult) else attribution
    return influence_share(c)


def parse_semantics(semantics: str, nodes: int = DEFAULT_NODES) -> PathSpec | None:
    """``pig`` | ``axis`` | ``axis:<f0,f1,...>`` | ``linear`` (None: exact ledger)."""
    if semantics == "linear":
        return None
    if semantics == "pig":
        return PathSpec.straight(nodes)
    if semantics == "axis":
        return PathSpec.axis(None, nodes)
    if semantics.startswith("axis:"):
        try:
            order = [int(v) for v in semantics[5:].split(",")]
        except ValueError as exc:
            raise InvalidInputError(f"bad axis order in {semantics!r}") from exc
        return PathSpec.axis(order, nodes)
    raise InvalidInputError(f"unknown attribution semantics {semantics!r}")


def attribute_pair(model: ScoringModel | ModelState, items: ItemTable, i: int, j: int,
                   semantics: str = "pig", nodes: int = DEFAULT_NODES) -> AttributionResult:
    """Attribution of the margin of (i, j) under a named semantics."""
    model = _model(model)
    path = parse_semantics(semantics, nodes)
    x_i, x_j = items.features[i], items.features[j]
    if path is None:
        if not isinstance(model, LinearModel):
            raise AttributionError("'linear' semantics needs a linear model")
        c = model.w * (x_i - x_j)
        total = float(model.value(x_i) - model.value(x_j))
        return AttributionResult(c, total, abs(float(c.sum()) - total), "linear")
    return path_attribute(model, x_j, x_i, path)


@dataclass(frozen=True)
class NonlinearInfluence:
    influence: FloatArray
    semantics: str
    pairs: tuple[tuple[int, int, float], ...]
    results: tuple[AttributionResult, ...]

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.results)

    def to_json(self) -> dict:
        return {
            "semantics": self.semantics,
            "pairs": [{"i": i, "j": j, "weight": w, **r.to_json()}
                      for (i, j, w), r in zip(self.pairs, self.results)],
            "I_tilde": self.influence.tolist(),
        }


def nonlinear_global(model: ScoringModel | ModelState, items: ItemTable, dist: PairDistribution,
                     semantics: str = "pig", nodes: int = DEFAULT_NODES,
                     workers: int | None = None) -> NonlinearInfluence:
    """Mean of the L1 shares of the chosen attribution over the pair distribution."""
    model = _model(model)
    pairs = dist.pairs
    workers = worker_count() if workers is None else workers

    def run(p):
        return attribute_pair(model, items, p[0], p[1], semantics, nodes)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(p) for p in pairs]
    R = np.empty((len(pairs), items.d))
    for k, ((i, j, _), res) in enumerate(zip(pairs, results)):
        shares = nonlinear_shares(res)
        if shares is None:
            raise UninformativePairError(f"pair {(i, j)} has an all-zero attribution", (i, j))
        R[k] = shares
    return NonlinearInfluence(dist.weights @ R, semantics, tuple(pairs), tuple(results))


# ---------------------------------------------------------------------------
# Parameter sensitivity
# ---------------------------------------------------------------------------


def parameter_sensitivity(model: ScoringModel | ModelState, x_i: ArrayLike,
                          x_j: ArrayLike) -> dict[str, FloatArray]:
    """Gradient of the margin F(x_i) - F(x_j) with respect to each model parameter."""
    model = _model(model)
    gi = model.param_gradient(np.asarray(x_i, dtype=float))
    gj = model.param_gradient(np.asarray(x_j, dtype=float))
    return {k: np.asarray(gi[k] - gj[k], dtype=float) for k in gi}


def predicted_margin_change(sensitivity: dict[str, FloatArray],
                            delta: dict[str, ArrayLike]) -> float:
    """First-order change of the margin under parameter step ``delta``."""
    return float(sum(np.sum(sensitivity[k] * np.asarray(delta.get(k, 0.0), dtype=float))
                     for k in sensitivity))


def perturb(model: ScoringModel, delta: dict[str, ArrayLike]) -> ScoringModel:
    params = model.params()
    return model.with_params({k: v + np.asarray(delta.get(k, 0.0), dtype=float)
                              for k, v in params.items()})
