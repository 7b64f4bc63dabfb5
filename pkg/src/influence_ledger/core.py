"""Items, scoring models, pair distributions and score/margin primitives."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    EmptySupportError,
    InvalidInputError,
    ModelEvaluationError,
    TieError,
)

FloatArray = NDArray[np.float64]

TIE_POLICIES = ("exclude", "error")


def _frozen(a: ArrayLike) -> FloatArray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ItemTable:
    """n items by d factors, with item ids and factor names."""

    ids: tuple[str, ...]
    features: FloatArray
    factor_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        if feats.ndim != 2:
            raise InvalidInputError("features must be a 2-d matrix")
        n, d = feats.shape
        ids = tuple(str(i) for i in self.ids)
        names = tuple(str(f) for f in self.factor_names)
        if n < 2:
            raise InvalidInputError(f"need at least 2 items, got {n}")
        if d < 1:
            raise InvalidInputError("need at least 1 factor")
        if len(ids) != n:
            raise InvalidInputError(f"{len(ids)} ids for {n} feature rows")
        if len(set(ids)) != n:
            raise InvalidInputError("item ids must be unique")
        if len(names) != d:
            raise InvalidInputError(f"{len(names)} factor names for {d} columns")
        if not np.all(np.isfinite(feats)):
            raise InvalidInputError("features must be finite")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "factor_names", names)

    @classmethod
    def from_array(cls, features: ArrayLike, ids: Sequence[str] | None = None,
                   factor_names: Sequence[str] | None = None) -> "ItemTable":
        feats = np.atleast_2d(np.asarray(features, dtype=float))
        n, d = feats.shape
        if ids is None:
            ids = [f"item{k}" for k in range(n)]
        if factor_names is None:
            factor_names = [f"f{k + 1}" for k in range(d)]
        return cls(tuple(ids), feats, tuple(factor_names))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ItemTable":
        path = Path(path)
        try:
            with path.open(newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InvalidInputError(f"cannot read items file {path}: {exc}") from exc
        rows = [r for r in rows if r and any(c.strip() for c in r)]
        if not rows:
            raise InvalidInputError(f"items file {path} is empty")
        header = [c.strip() for c in rows[0]]
        if len(header) < 2 or header[0] != "item_id":
            raise InvalidInputError("items header must be item_id,<factor_1>,...")
        ids, values = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise InvalidInputError(f"{path}:{lineno}: expected {len(header)} columns")
            ids.append(row[0].strip())
            try:
                values.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
        if not values:
            raise InvalidInputError(f"items file {path} has no rows")
        return cls(tuple(ids), np.array(values), tuple(header[1:]))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def row(self, i: int) -> FloatArray:
        return self.features[i]


# ---------------------------------------------------------------------------
# Scoring models
# ---------------------------------------------------------------------------


def fd_step(x: FloatArray, scale: float = 1e-6) -> FloatArray:
    return np.maximum(scale, scale * np.abs(x))


# Second differences lose ~eps/h**2 to rounding; a step of 1e-6 would leave
# only ~4 significant digits, so mixed partials use a wider step.
MIXED_FD_SCALE = 1e-4


class ScoringModel:
    """Base class for F: R^d -> R.

    Subclasses implement ``_value_batch`` and optionally the analytic
    ``_gradient_batch`` / ``_hessian``.  With ``derivatives="fd"`` (always the
    case for black-box models) derivatives come from central differences.
    """

    family: str = "abstract"
    dim: int
    derivatives: str = "analytic"

    # -- evaluation --------------------------------------------------------
    def _value_batch(self, X: FloatArray) -> FloatArray:
        raise NotImplementedError

    def value(self, x: ArrayLike):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.dim:
            raise InvalidInputError(
                f"model expects {self.dim} factors, got {X2.shape[1]}")
        out = np.asarray(self._value_batch(X2), dtype=float)
        return float(out[0]) if single else out

    __call__ = value

    def gradient(self, x: ArrayLike) -> FloatArray:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.dim:
            raise InvalidInputError(
                f"model expects {self.dim} factors, got {X2.shape[1]}")
        if self.derivatives == "fd":
            G = np.array([self.fd_gradient(row) for row in X2])
        else:
            G = self._gradient_batch(X2)
        return G[0] if single else G

    def hessian(self, x: ArrayLike) -> FloatArray:
        x = np.asarray(x, dtype=float)
        if self.derivatives == "fd":
            return self.fd_hessian(x)
        return self._hessian(x)

    def mixed_partial(self, f: int, g: int, x: ArrayLike) -> float:
        x = np.asarray(x, dtype=float)
        if self.derivatives == "fd":
            return self.fd_mixed_partial(f, g, x)
        return float(self._hessian(x)[g, f])

    def _gradient_batch(self, X: FloatArray) -> FloatArray:
        return np.array([self.fd_gradient(row) for row in X])

    def _hessian(self, x: FloatArray) -> FloatArray:
        return self.fd_hessian(x)

    # -- finite differences ------------------------------------------------
    def fd_gradient(self, x: ArrayLike) -> FloatArray:
        x = np.asarray(x, dtype=float)
        h = fd_step(x)
        P = np.repeat(x[None, :], 2 * self.dim, axis=0)
        idx = np.arange(self.dim)
        P[2 * idx, idx] += h
        P[2 * idx + 1, idx] -= h
        vals = self._value_batch(P)
        return (vals[0::2] - vals[1::2]) / (2.0 * h)

    def fd_mixed_partial(self, f: int, g: int, x: ArrayLike) -> float:
        x = np.asarray(x, dtype=float)
        h = fd_step(x, MIXED_FD_SCALE)
        if f == g:
            P = np.repeat(x[None, :], 3, axis=0)
            P[0, f] += h[f]
            P[2, f] -= h[f]
            v = self._value_batch(P)
            return float((v[0] - 2.0 * v[1] + v[2]) / h[f] ** 2)
        P = np.repeat(x[None, :], 4, axis=0)
        for row, (sf, sg) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
            P[row, f] += sf * h[f]
            P[row, g] += sg * h[g]
        v = self._value_batch(P)
        return float((v[0] - v[1] - v[2] + v[3]) / (4.0 * h[f] * h[g]))

    def fd_hessian(self, x: ArrayLike) -> FloatArray:
        x = np.asarray(x, dtype=float)
        H = np.empty((self.dim, self.dim))
        for f in range(self.dim):
            for g in range(f, self.dim):
                H[f, g] = H[g, f] = self.fd_mixed_partial(f, g, x)
        return H

    # -- parameters (for sensitivity) -------------------------------------
    def params(self) -> dict[str, FloatArray]:
        raise InvalidInputError(f"{self.family} model exposes no parameters")

    def with_params(self, params: dict[str, ArrayLike]) -> "ScoringModel":
        raise InvalidInputError(f"{self.family} model exposes no parameters")

    def param_gradient(self, x: ArrayLike) -> dict[str, FloatArray]:
        raise InvalidInputError(f"{self.family} model exposes no parameters")

    def to_config(self) -> dict[str, Any]:
        raise InvalidInputError(f"{self.family} model has no config form")


@dataclass(frozen=True, eq=False)
class LinearModel(ScoringModel):
    """F(x) = w . x"""

    w: FloatArray
    derivatives: str = "analytic"
    family = "linear"

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.w, dtype=float))
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise InvalidInputError("linear weights must be a finite vector")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        _check_mode(self.derivatives)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def _value_batch(self, X):
        return X @ self.w

    def _gradient_batch(self, X):
        return np.broadcast_to(self.w, X.shape).copy()

    def _hessian(self, x):
        return np.zeros((self.dim, self.dim))

    def params(self):
        return {"w": self.w.copy()}

    def with_params(self, params):
        return LinearModel(params["w"], self.derivatives)

    def param_gradient(self, x):
        return {"w": np.array(x, dtype=float)}

    def to_config(self):
        return {"family": "linear", "w": self.w.tolist()}


@dataclass(frozen=True, eq=False)
class AdditiveModel(ScoringModel):
    """F(x) = sum_f poly_f(x_f), coefficients in ascending powers."""

    poly: FloatArray
    derivatives: str = "analytic"
    family = "additive"

    def __post_init__(self):
        rows = [np.atleast_1d(np.array(r, dtype=float)) for r in self.poly]
        if not rows:
            raise InvalidInputError("additive model needs at least one factor")
        width = max(len(r) for r in rows)
        P = np.zeros((len(rows), max(width, 1)))
        for f, r in enumerate(rows):
            P[f, : len(r)] = r
        if not np.all(np.isfinite(P)):
            raise InvalidInputError("polynomial coefficients must be finite")
        P.setflags(write=False)
        object.__setattr__(self, "poly", P)
        _check_mode(self.derivatives)

    @property
    def dim(self) -> int:
        return self.poly.shape[0]

    def _powers(self, X, k):
        return X[..., None] ** np.arange(k)

    def _value_batch(self, X):
        return np.einsum("mfk,fk->m", self._powers(X, self.poly.shape[1]), self.poly)

    def _deriv_coeffs(self, order):
        C = self.poly
        for _ in range(order):
            k = C.shape[1]
            if k <= 1:
                return np.zeros((self.dim, 1))
            C = C[:, 1:] * np.arange(1, k)
        return C

    def _gradient_batch(self, X):
        D = self._deriv_coeffs(1)
        return np.einsum("mfk,fk->mf", self._powers(X, D.shape[1]), D)

    def _hessian(self, x):
        D2 = self._deriv_coeffs(2)
        return np.diag(np.einsum("fk,fk->f", self._powers(x, D2.shape[1]), D2))

    def params(self):
        return {"poly": self.poly.copy()}

    def with_params(self, params):
        return AdditiveModel(params["poly"], self.derivatives)

    def param_gradient(self, x):
        return {"poly": self._powers(np.asarray(x, dtype=float), self.poly.shape[1])}

    def to_config(self):
        return {"family": "additive", "poly": self.poly.tolist()}


@dataclass(frozen=True, eq=False)
class QuadraticModel(ScoringModel):
    """F(x) = 1/2 x^T Q x + w . x + c, so the Hessian is exactly Q."""

    Q: FloatArray
    w: FloatArray
    c: float = 0.0
    derivatives: str = "analytic"
    family = "quadratic"

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        w = np.atleast_1d(np.array(self.w, dtype=float))
        d = w.shape[0]
        if Q.shape != (d, d):
            raise InvalidInputError(f"Q must be {d}x{d}, got {Q.shape}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(w)) and math.isfinite(self.c)):
            raise InvalidInputError("quadratic parameters must be finite")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise InvalidInputError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", float(self.c))
        _check_mode(self.derivatives)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def _value_batch(self, X):
        return 0.5 * np.einsum("mi,ij,mj->m", X, self.Q, X) + X @ self.w + self.c

    def _gradient_batch(self, X):
        return X @ self.Q + self.w

    def _hessian(self, x):
        return np.array(self.Q)

    def params(self):
        return {"Q": self.Q.copy(), "w": self.w.copy(), "c": np.array(self.c)}

    def with_params(self, params):
        Q = np.asarray(params["Q"], dtype=float)
        return QuadraticModel(0.5 * (Q + Q.T), params["w"], float(params["c"]),
                              self.derivatives)

    def param_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return {"Q": 0.5 * np.outer(x, x), "w": x.copy(), "c": np.array(1.0)}

    def to_config(self):
        return {"family": "quadratic", "Q": self.Q.tolist(), "w": self.w.tolist(),
                "c": self.c}


@dataclass(frozen=True, eq=False)
class BlackBoxModel(ScoringModel):
    """Value-only evaluator; every derivative is a central difference."""

    fn: Callable[[FloatArray], float]
    dim: int = 1
    derivatives: str = field(default="fd", init=False)
    family = "blackbox"

    def _value_batch(self, X):
        return np.array([float(self.fn(row)) for row in X])


def _check_mode(mode: str) -> None:
    if mode not in ("analytic", "fd"):
        raise InvalidInputError(f"unknown derivative mode {mode!r}")


def model_from_config(cfg: dict[str, Any]) -> ScoringModel:
    """Build a model from its JSON config dict."""
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise InvalidInputError("model config must be an object with a 'family' key")
    family = cfg["family"]
    mode = cfg.get("derivatives", "analytic")
    try:
        if family == "linear":
            return LinearModel(cfg["w"], mode)
        if family == "quadratic":
            return QuadraticModel(cfg["Q"], cfg["w"], cfg.get("c", 0.0), mode)
        if family == "additive":
            return AdditiveModel(cfg["poly"], mode)
    except KeyError as exc:
        raise InvalidInputError(f"{family} model config missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"bad {family} model config: {exc}") from exc
    raise InvalidInputError(f"unknown model family {family!r}")


def load_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from exc


def load_model(path: str | Path) -> ScoringModel:
    return model_from_config(load_json(path))


@dataclass(frozen=True)
class ModelState:
    label: str
    model: ScoringModel

    def __post_init__(self):
        if not self.label:
            raise InvalidInputError("model state label must be nonempty")


# ---------------------------------------------------------------------------
# Scores and margins
# ---------------------------------------------------------------------------


def _as_model(model: ScoringModel | ModelState) -> ScoringModel:
    return model.model if isinstance(model, ModelState) else model


def score_items(model: ScoringModel | ModelState, items: ItemTable) -> FloatArray:
    model = _as_model(model)
    if model.dim != items.d:
        raise InvalidInputError(f"model has {model.dim} factors, items have {items.d}")
    s = np.asarray(model.value(items.features), dtype=float)
    if not np.all(np.isfinite(s)):
        raise ModelEvaluationError("model produced non-finite scores")
    return s


def pair_margin(model: ScoringModel | ModelState, items: ItemTable, i: int, j: int) -> float:
    if i == j:
        raise InvalidInputError(f"margin of item {i} with itself is undefined")
    model = _as_model(model)
    if model.dim != items.d:
        raise InvalidInputError(f"model has {model.dim} factors, items have {items.d}")
    si, sj = model.value(items.features[[i, j]])
    if not (math.isfinite(si) and math.isfinite(sj)):
        raise ModelEvaluationError("model produced non-finite scores")
    return float(si - sj)


# ---------------------------------------------------------------------------
# Pair distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairDistribution:
    """Normalized weights over ordered pairs (i, j), i != j."""

    i: NDArray[np.int64]
    j: NDArray[np.int64]
    weights: FloatArray
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).reshape(-1)
        j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(i) == len(j) == len(w)):
            raise InvalidInputError("pair index and weight arrays differ in length")
        if len(w) == 0:
            raise EmptySupportError("pair distribution has empty support")
        if np.any(i == j):
            raise InvalidInputError("pairs must join distinct items")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("pair weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise EmptySupportError("pair weights sum to zero")
        if abs(total - 1.0) > 1e-12:
            w = w / total
        for arr in (i, j, w):
            arr.setflags(write=False)
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "weights", w)

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.i, self.j, self.weights)]

    def __len__(self) -> int:
        return len(self.weights)

    def digest(self) -> str:
        payload = json.dumps(self.source, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence], source: dict | None = None) -> "PairDistribution":
        pairs = [tuple(p) for p in pairs]
        if not pairs:
            raise EmptySupportError("no pairs given")
        for p in pairs:
            if len(p) == 3 and float(p[2]) < 0:
                raise InvalidInputError(f"negative weight on pair {p[:2]}")
        kept = [p for p in pairs if len(p) == 2 or float(p[2]) > 0]
        if not kept:
            raise EmptySupportError("all pair weights are zero")
        i = [int(p[0]) for p in kept]
        j = [int(p[1]) for p in kept]
        w = [float(p[2]) if len(p) == 3 else 1.0 for p in kept]
        return cls(np.array(i), np.array(j), np.array(w), source or {"type": "explicit"})


def pair_effort(model: ScoringModel, items: ItemTable, i: int, j: int) -> float:
    """Total local effort Z_ij: L1 mass of the linear ledger, or of PIG otherwise."""
    if isinstance(model, LinearModel):
        return float(np.abs(model.w * (items.features[i] - items.features[j])).sum())
    from .paths import pig

    return float(np.abs(pig(model, items.features[j], items.features[i]).contributions).sum())


def _pairwise_efforts(model: ScoringModel, items: ItemTable,
                      ii: NDArray, jj: NDArray) -> FloatArray:
    if isinstance(model, LinearModel):
        return np.abs((items.features[ii] - items.features[jj]) * model.w).sum(axis=1)
    return np.array([pair_effort(model, items, a, b) for a, b in zip(ii, jj)])


def _filter_support(model: ScoringModel, items: ItemTable, ii, jj,
                    tie_policy: str) -> tuple[NDArray, NDArray]:
    s = score_items(model, items)
    tied = s[ii] == s[jj]
    efforts = _pairwise_efforts(model, items, ii, jj)
    informative = efforts > 0
    if tie_policy == "error":
        bad = [(int(a), int(b)) for a, b, t, z in zip(ii, jj, tied, informative) if t and z]
        if bad:
            raise TieError(f"tied scores on {len(bad)} pair(s): {bad[:10]}", bad)
    keep = informative & ~tied
    return ii[keep], jj[keep]


def build_pair_distribution(spec: dict[str, Any], items: ItemTable,
                            model: ScoringModel | ModelState | None = None,
                            tie_policy: str = "exclude") -> PairDistribution:
    """Build a normalized pair distribution from a JSON-style spec.

    ``uniform_informative`` takes every unordered pair (i < j) with Z_ij > 0
    and no score tie; ``top_k_exposure`` does the same restricted to the
    top-K items of the model's current ranking; ``explicit`` normalizes the
    supplied weights and drops zero-weight pairs.
    """
    if tie_policy not in TIE_POLICIES:
        raise InvalidInputError(f"tie policy must be one of {TIE_POLICIES}")
    if not isinstance(spec, dict) or "type" not in spec:
        raise InvalidInputError("pair spec must be an object with a 'type' key")
    kind = spec["type"]
    if kind == "explicit":
        raw = spec.get("pairs")
        if not isinstance(raw, list):
            raise InvalidInputError("explicit pair spec needs a 'pairs' list")
        for p in raw:
            if not (isinstance(p, (list, tuple)) and len(p) in (2, 3)):
                raise InvalidInputError(f"bad pair entry {p!r}")
            if not (0 <= int(p[0]) < items.n and 0 <= int(p[1]) < items.n):
                raise InvalidInputError(f"pair {p!r} indexes outside 0..{items.n - 1}")
        return PairDistribution.from_pairs(raw, source=spec)

    if model is None:
        raise InvalidInputError(f"{kind} pair spec needs a model")
    model = _as_model(model)
    if kind == "uniform_informative":
        candidates = np.arange(items.n)
    elif kind == "top_k_exposure":
        k = spec.get("k")
        if not isinstance(k, int) or k < 2:
            raise InvalidInputError("top_k_exposure needs an integer k >= 2")
        s = score_items(model, items)
        order = np.argsort(-s, kind="stable")
        candidates = np.sort(order[: min(k, items.n)])
    else:
        raise InvalidInputError(f"unknown pair spec type {kind!r}")

    ii, jj = np.triu_indices(len(candidates), k=1)
    ii, jj = candidates[ii], candidates[jj]
    ii, jj = _filter_support(model, items, ii, jj, tie_policy)
    if len(ii) == 0:
        raise EmptySupportError(f"{kind}: no informative untied pairs")
    return PairDistribution(ii, jj, np.full(len(ii), 1.0 / len(ii)), dict(spec))
