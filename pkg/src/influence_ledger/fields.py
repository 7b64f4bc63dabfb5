"""Antisymmetric edge fields on pair graphs: exactness, cycle residuals,
triangle curl and a weighted least-squares gradient/residual split."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike
from scipy.sparse.linalg import cg

from .core import FloatArray, ItemTable, ModelState, ScoringModel
from .errors import DisconnectedGraphError, EdgeFieldError
from .paths import attribute_pair

DENSE_SOLVE_LIMIT = 2000


@dataclass(frozen=True)
class PairGraph:
    """Undirected graph on n vertices; edges stored as (i, j) with i < j."""

    n: int
    edges: tuple[tuple[int, int], ...]
    weights: FloatArray | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise EdgeFieldError(f"self-loop on vertex {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise EdgeFieldError(f"edge ({a}, {b}) outside 0..{self.n - 1}")
            edges.append((min(a, b), max(a, b)))
        if len(set(edges)) != len(edges):
            raise EdgeFieldError("duplicate edges")
        order = sorted(range(len(edges)), key=lambda k: edges[k])
        edges = [edges[k] for k in order]
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)[order]
            if w.shape != (len(edges),):
                raise EdgeFieldError("one weight per edge required")
            w.setflags(write=False)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_index", {e: k for k, e in enumerate(edges)})

    @classmethod
    def complete(cls, n: int) -> "PairGraph":
        return cls(n, tuple(itertools.combinations(range(n), 2)))

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Sequence[int]]) -> "PairGraph":
        seen = sorted({(min(int(p[0]), int(p[1])), max(int(p[0]), int(p[1]))) for p in pairs})
        return cls(n, tuple(seen))

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_index(self, i: int, j: int) -> tuple[int, int]:
        """(edge position, orientation sign) for the oriented pair (i, j)."""
        key = (i, j) if i < j else (j, i)
        try:
            k = self._index[key]
        except KeyError:
            raise EdgeFieldError(f"({i}, {j}) is not an edge of the graph") from None
        return k, (1 if i < j else -1)

    def has_edge(self, i: int, j: int) -> bool:
        return ((i, j) if i < j else (j, i)) in self._index

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def is_connected(self) -> bool:
        return len(_bfs_tree(self, 0)[0]) == self.n

    def is_complete(self) -> bool:
        return self.m == self.n * (self.n - 1) // 2

    def incidence(self) -> FloatArray:
        """Dense (edges x vertices) matrix with rows e_i - e_j."""
        B = np.zeros((self.m, self.n))
        for k, (a, b) in enumerate(self.edges):
            B[k, a] = 1.0
            B[k, b] = -1.0
        return B

    def triangles(self) -> list[tuple[int, int, int]]:
        adj = [set(x) for x in self.adjacency()]
        out = []
        for a, b in self.edges:
            for c in sorted(adj[a] & adj[b]):
                if c > b:
                    out.append((a, b, c))
        return out


@dataclass(frozen=True)
class EdgeField:
    """Values on canonical edges; ``value(j, i) == -value(i, j)``."""

    graph: PairGraph
    values: FloatArray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.graph.m,):
            raise EdgeFieldError(f"field needs {self.graph.m} edge values, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def value(self, i: int, j: int) -> float:
        k, sign = self.graph.edge_index(i, j)
        return sign * float(self.values[k])

    def __add__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.graph, self.values + other.values)

    def __sub__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.graph, self.values - other.values)

    def rows(self) -> list[tuple[int, int, float]]:
        return [(a, b, float(v)) for (a, b), v in zip(self.graph.edges, self.values)]


def field_from_scores(s: ArrayLike, graph: PairGraph | None = None) -> EdgeField:
    s = np.asarray(s, dtype=float)
    graph = graph or PairGraph.complete(len(s))
    if graph.n != len(s):
        raise EdgeFieldError("score vector and graph sizes differ")
    return EdgeField(graph, np.array([s[a] - s[b] for a, b in graph.edges]))


def factor_fields(semantics: str, model: ScoringModel | ModelState, items: ItemTable,
                  graph: PairGraph | None = None, nodes: int = 32) -> list[EdgeField]:
    """One edge field per factor: the attribution of each edge's margin."""
    graph = graph or PairGraph.complete(items.n)
    if graph.n != items.n:
        raise EdgeFieldError("graph and item table sizes differ")
    C = np.array([attribute_pair(model, items, a, b, semantics, nodes).contributions
                  for a, b in graph.edges]).reshape(graph.m, items.d)
    return [EdgeField(graph, C[:, f]) for f in range(items.d)]


def field_from_attribution(semantics: str, model: ScoringModel | ModelState, items: ItemTable,
                           graph: PairGraph | None, f: int, nodes: int = 32) -> EdgeField:
    return factor_fields(semantics, model, items, graph, nodes)[f]


def cycle_residual(fld: EdgeField, cycle: Sequence[int]) -> float:
    """Sum of oriented edge values around a closed vertex sequence.

    The cycle may be given with or without repeating its first vertex.
    """
    cyc = list(cycle)
    if len(cyc) > 1 and cyc[0] == cyc[-1]:
        cyc = cyc[:-1]
    if len(cyc) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(cyc, cyc[1:] + cyc[:1]):
        total += fld.value(a, b)
    return total


def _bfs_tree(graph: PairGraph, root: int) -> tuple[dict[int, int], list[int]]:
    """Parent map and visit order of a BFS tree."""
    adj = graph.adjacency()
    parent = {root: -1}
    order = [root]
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for nb in sorted(adj[v]):
            if nb not in parent:
                parent[nb] = v
                order.append(nb)
                queue.append(nb)
    return parent, order


def _tree_path(parent: dict[int, int], v: int) -> list[int]:
    out = [v]
    while parent[out[-1]] != -1:
        out.append(parent[out[-1]])
    return out


def _fundamental_cycle(parent: dict[int, int], i: int, j: int) -> list[int]:
    """Cycle closed by the non-tree edge (i, j): i -> j -> tree path -> i."""
    pi, pj = _tree_path(parent, i), _tree_path(parent, j)
    on_i = set(pi)
    lca = next(v for v in pj if v in on_i)
    up_j = pj[: pj.index(lca) + 1]          # j ... lca
    down_i = pi[: pi.index(lca)][::-1]      # below lca ... i
    cycle = [i] + up_j + down_i
    return cycle[:-1] if len(cycle) > 1 and cycle[-1] == i else cycle


@dataclass(frozen=True)
class Representability:
    representable: bool
    scores: FloatArray | None
    witness_cycle: tuple[int, ...] | None
    witness_residual: float
    max_violation: float

    def to_json(self) -> dict:
        out = {"representable": self.representable,
               "s": None if self.scores is None else self.scores.tolist(),
               "max_violation": self.max_violation}
        if self.witness_cycle is not None:
            out["witness_cycle"] = list(self.witness_cycle)
            out["witness_residual"] = self.witness_residual
        return out


def score_representability(fld: EdgeField, tol: float | None = None) -> Representability:
    """Integrate the field from the smallest vertex along a BFS tree and test
    every other edge.

    On the complete graph the tree is the star at vertex 0, so s_i = A_i0
    and every failure is witnessed by a triangle through vertex 0.  On
    success the returned scores are centred to sum to zero.
    """
    graph = fld.graph
    if graph.n == 0:
        raise EdgeFieldError("empty graph")
    root = 0
    parent, order = _bfs_tree(graph, root)
    if len(order) != graph.n:
        raise DisconnectedGraphError("score representability needs a connected graph")
    s = np.zeros(graph.n)
    for v in order[1:]:
        # A_{p v} = s_p - s_v
        s[v] = s[parent[v]] - fld.value(parent[v], v)
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.max(np.abs(fld.values), initial=0.0)))
    worst, worst_edge = 0.0, None
    for (a, b), val in zip(graph.edges, fld.values):
        err = abs(val - (s[a] - s[b]))
        if err > worst:
            worst, worst_edge = err, (a, b)
    if worst <= tol:
        return Representability(True, s - s.mean(), None, 0.0, worst)
    a, b = worst_edge
    cycle = _fundamental_cycle(parent, a, b)
    return Representability(False, None, tuple(cycle), cycle_residual(fld, cycle), worst)


def triangle_curl(fld: EdgeField, i: int, j: int, k: int) -> float:
    return fld.value(i, j) + fld.value(j, k) + fld.value(k, i)


@dataclass(frozen=True)
class CurlTable:
    triangles: tuple[tuple[int, int, int], ...]
    kappa: FloatArray  # triangles x factors
    totals: FloatArray

    def worst(self, limit: int) -> FloatArray:
        """Row indices of the ``limit`` triangles with the largest factor curl."""
        score = np.max(np.abs(self.kappa), axis=1, initial=0.0)
        if len(score) <= limit:
            return np.argsort(-score, kind="stable")
        top = np.argpartition(-score, limit - 1)[:limit]
        return top[np.argsort(-score[top], kind="stable")]

    def rows(self, limit: int | None = None) -> list[list]:
        """``i, j, k, kappa_1..kappa_d, total`` per triangle; with a limit,
        only the worst triangles in their original order."""
        keep = range(len(self.triangles)) if limit is None else sorted(self.worst(limit))
        return [[*self.triangles[t], *map(float, self.kappa[t]), float(self.totals[t])]
                for t in keep]

    def to_json(self, worst: int = 20) -> dict:
        """Summary only: the full table can have millions of rows."""
        return {"n_triangles": len(self.triangles),
                "max_abs_kappa": np.max(np.abs(self.kappa), axis=0, initial=0.0).tolist(),
                "max_abs_total": float(np.max(np.abs(self.totals), initial=0.0)),
                "worst": [{"triangle": list(self.triangles[t]), "kappa": self.kappa[t].tolist(),
                           "total": float(self.totals[t])} for t in self.worst(worst)]}


def curl_table(fields: Sequence[EdgeField], graph: PairGraph | None = None) -> CurlTable:
    graph = graph or fields[0].graph
    tris = graph.triangles()
    V = np.column_stack([fl.values for fl in fields]).reshape(graph.m, len(fields))
    if tris:
        # for a < b < c: kappa = A_ab + A_bc - A_ac on canonical edges
        idx = graph._index
        ab = np.array([idx[(a, b)] for a, b, _ in tris])
        bc = np.array([idx[(b, c)] for _, b, c in tris])
        ac = np.array([idx[(a, c)] for a, _, c in tris])
        K = V[ab] + V[bc] - V[ac]
    else:
        K = np.zeros((0, len(fields)))
    return CurlTable(tuple(tris), K, K.sum(axis=1))


@dataclass(frozen=True)
class HodgeSplit:
    potential: FloatArray
    gradient: EdgeField
    residual: EdgeField
    orthogonality: float  # max |B^T W r|

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual.values))

    def to_json(self) -> dict:
        return {"s": self.potential.tolist(), "residual_norm": self.residual_norm,
                "orthogonality": self.orthogonality}


def hodge_decompose(fld: EdgeField, weights: ArrayLike | None = None) -> HodgeSplit:
    """Weighted least-squares potential: argmin sum_e w_e (s_i - s_j - A_ij)^2
    with sum(s) = 0; the residual is what no potential can explain."""
    graph = fld.graph
    if weights is None:
        weights = graph.weights if graph.weights is not None else np.ones(graph.m)
    w = np.asarray(weights, dtype=float)
    if w.shape != (graph.m,):
        raise EdgeFieldError("one weight per edge required")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise EdgeFieldError("edge weights must be positive")
    if not graph.is_connected():
        raise DisconnectedGraphError("Hodge split needs a connected graph")
    n = graph.n
    rows = np.repeat(np.arange(graph.m), 2)
    cols = np.array(graph.edges).reshape(-1)
    B = sp.csr_matrix((np.tile([1.0, -1.0], graph.m), (rows, cols)), shape=(graph.m, n))
    rhs = B.T @ (w * fld.values)
    L = (B.T @ sp.diags(w) @ B)
    if n <= DENSE_SOLVE_LIMIT:
        # L + 11^T is nonsingular on a connected graph and keeps sum(s) = 0.
        s = np.linalg.solve(L.toarray() + 1.0, rhs)
    else:
        s, info = cg(L, rhs, rtol=1e-12, maxiter=10 * n)
        if info != 0:
            raise EdgeFieldError(f"conjugate gradient did not converge (info={info})")
    s = s - s.mean()
    grad = B @ s
    r = fld.values - grad
    orth = float(np.max(np.abs(B.T @ (w * r)), initial=0.0))
    return HodgeSplit(s, EdgeField(graph, grad), EdgeField(graph, r), orth)


def dimension_gap(n: int) -> int:
    """Codimension of score-generated fields among all antisymmetric fields."""
    if n < 1:
        raise EdgeFieldError("n must be positive")
    return n * (n - 1) // 2 - (n - 1)


def score_map_rank(n: int) -> int:
    """Numerical rank of s -> (s_i - s_j) on the complete graph."""
    if n < 2:
        return 0
    return int(np.linalg.matrix_rank(PairGraph.complete(n).incidence()))
