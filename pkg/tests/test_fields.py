import itertools

import numpy as np
import pytest

from influence_ledger import (
    AdditiveModel,
    EdgeField,
    ItemTable,
    LinearModel,
    PairGraph,
    QuadraticModel,
    curl_table,
    cycle_residual,
    dimension_gap,
    factor_fields,
    field_from_attribution,
    field_from_scores,
    hodge_decompose,
    score_representability,
    triangle_curl,
)
from influence_ledger.errors import DisconnectedGraphError, EdgeFieldError
from influence_ledger.fields import score_map_rank

TRIANGLE = PairGraph.complete(3)
# edges (0,1), (0,2), (1,2); A_01 = A_12 = A_20 = 1
CYCLIC = EdgeField(TRIANGLE, [1.0, -1.0, 1.0])
BILINEAR = QuadraticModel([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0])


def _random_connected_graph(rng, n, p=0.5):
    edges = {(k, k + 1) for k in range(n - 1)}  # a path keeps it connected
    for a, b in itertools.combinations(range(n), 2):
        if rng.uniform() < p:
            edges.add((a, b))
    perm = rng.permutation(n)
    return PairGraph(n, tuple((int(perm[a]), int(perm[b])) for a, b in edges))


class TestGraphAndFields:
    def test_graph_invariants(self):
        g = PairGraph(3, ((2, 0), (1, 2)))
        assert g.edges == ((0, 2), (1, 2))
        with pytest.raises(EdgeFieldError):
            PairGraph(3, ((1, 1),))
        with pytest.raises(EdgeFieldError):
            PairGraph(3, ((0, 1), (1, 0)))
        with pytest.raises(EdgeFieldError):
            PairGraph(3, ((0, 3),))
        assert PairGraph.complete(4).triangles() == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]

    def test_score_field_examples(self):
        fld = field_from_scores([3.0, 1.0, 0.0])
        assert (fld.value(0, 1), fld.value(0, 2), fld.value(1, 2)) == (2.0, 3.0, 1.0)
        assert fld.value(2, 0) == -3.0
        assert np.all(field_from_scores([4.0] * 5).values == 0.0)
        with pytest.raises(EdgeFieldError):
            fld.value(0, 0)

    def test_linear_factor_fields_are_potential_differences(self, rng):
        X = rng.normal(size=(5, 3))
        w = rng.normal(size=3)
        items = ItemTable.from_array(X)
        fields = factor_fields("linear", LinearModel(w), items)
        for f, fld in enumerate(fields):
            ref = field_from_scores(w[f] * X[:, f])
            np.testing.assert_allclose(fld.values, ref.values, atol=1e-14)
        pig_field = field_from_attribution("pig", LinearModel(w), items, None, 1)
        np.testing.assert_allclose(pig_field.values, fields[1].values, atol=1e-12)

    def test_csv_rows_use_canonical_orientation(self):
        rows = field_from_scores([3.0, 1.0, 0.0]).rows()
        assert rows == [(0, 1, 2.0), (0, 2, 3.0), (1, 2, 1.0)]


class TestCycles:
    def test_examples(self, rng):
        fld = field_from_scores(rng.normal(size=6))
        for cyc in ([0, 1, 2], [5, 3, 1, 0, 2], [0, 4, 0]):
            assert abs(cycle_residual(fld, cyc)) < 1e-12
        assert cycle_residual(CYCLIC, [0, 1, 2]) == 3.0
        assert cycle_residual(CYCLIC, [0, 1, 2, 0]) == 3.0
        assert cycle_residual(CYCLIC, [2, 1, 0]) == -3.0
        assert cycle_residual(CYCLIC, [0, 1, 0]) == 0.0

    def test_triangle_curl_of_exact_fields(self, rng):
        for _ in range(20):
            fld = field_from_scores(rng.normal(scale=10, size=7))
            for t in fld.graph.triangles():
                assert abs(triangle_curl(fld, *t)) < 1e-12
        assert triangle_curl(CYCLIC, 0, 1, 2) == 3.0


class TestRepresentability:
    def test_examples(self):
        rep = score_representability(field_from_scores([3.0, 1.0, 0.0]))
        assert rep.representable
        np.testing.assert_allclose(rep.scores, [5 / 3, -1 / 3, -4 / 3], atol=1e-15)
        bad = score_representability(CYCLIC)
        assert not bad.representable
        assert sorted(bad.witness_cycle) == [0, 1, 2]
        assert abs(bad.witness_residual) == 3.0
        single = PairGraph(2, ((0, 1),))
        assert score_representability(EdgeField(single, [7.5])).representable

    def test_round_trip(self, rng):
        for _ in range(50):
            s = rng.normal(scale=5, size=int(rng.integers(2, 12)))
            rep = score_representability(field_from_scores(s))
            assert rep.representable
            np.testing.assert_allclose(rep.scores, s - s.mean(), rtol=0, atol=1e-12)

    def test_incomplete_graphs(self, rng):
        for _ in range(30):
            n = int(rng.integers(3, 10))
            g = _random_connected_graph(rng, n, p=0.3)
            s = rng.normal(size=n)
            rep = score_representability(field_from_scores(s, g))
            assert rep.representable
            np.testing.assert_allclose(rep.scores, s - s.mean(), atol=1e-12)
            # a corrupted edge is detectable exactly when it lies on a cycle
            vals = field_from_scores(s, g).values.copy()
            k = int(rng.integers(g.m))
            vals[k] += 0.5
            fld = EdgeField(g, vals)
            rest = PairGraph(n, g.edges[:k] + g.edges[k + 1:])
            rep = score_representability(fld)
            assert rep.representable == (not rest.is_connected())
            if not rep.representable:
                cyc = rep.witness_cycle
                assert len(set(cyc)) == len(cyc) >= 3
                for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                    assert g.has_edge(a, b)
                assert abs(cycle_residual(fld, cyc)) == pytest.approx(0.5, abs=1e-12)

    def test_disconnected(self):
        g = PairGraph(4, ((0, 1), (2, 3)))
        with pytest.raises(DisconnectedGraphError):
            score_representability(EdgeField(g, [1.0, 2.0]))
        with pytest.raises(DisconnectedGraphError):
            hodge_decompose(EdgeField(g, [1.0, 2.0]))


class TestCurlCancellation:
    @pytest.mark.parametrize("semantics", ["pig", "axis", "axis:1,0"])
    def test_bilinear_factor_fields(self, rng, semantics):
        items = ItemTable.from_array(rng.normal(scale=2.0, size=(6, 2)))
        fields = factor_fields(semantics, BILINEAR, items)
        table = curl_table(fields)
        assert np.max(np.abs(table.totals)) < 1e-8
        assert np.max(np.abs(table.kappa)) > 1e-3

    def test_linear_and_additive_fields_have_zero_curl(self, rng):
        items = ItemTable.from_array(rng.normal(size=(6, 3)))
        for model, sem in ((LinearModel(rng.normal(size=3)), "linear"),
                           (AdditiveModel(rng.normal(size=(3, 4))), "pig")):
            table = curl_table(factor_fields(sem, model, items))
            assert np.max(np.abs(table.kappa)) < 1e-10


class TestHodge:
    def test_exact_field(self, rng):
        s = rng.normal(size=7)
        fld = field_from_scores(s)
        split = hodge_decompose(fld)
        assert split.residual_norm <= 1e-10 * np.linalg.norm(fld.values)
        np.testing.assert_allclose(split.potential, score_representability(fld).scores,
                                   atol=1e-12)

    def test_cyclic_field(self):
        split = hodge_decompose(CYCLIC)
        np.testing.assert_allclose(split.potential, 0.0, atol=1e-15)
        np.testing.assert_allclose(split.residual.values, CYCLIC.values, atol=1e-15)

    def test_superposition(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 9))
            g = _random_connected_graph(rng, n)
            w = rng.uniform(0.5, 2.0, size=g.m)
            s = rng.normal(size=n)
            s -= s.mean()
            # a weighted cycle space element: W^{-1} times a kernel vector of B^T
            B = g.incidence()
            _, sv, Vt = np.linalg.svd(B.T)
            kernel = Vt[np.sum(sv > 1e-10):].T
            cyc = (kernel @ rng.normal(size=kernel.shape[1])) / w if kernel.size else 0 * w
            fld = EdgeField(g, B @ s + cyc)
            split = hodge_decompose(fld, w)
            np.testing.assert_allclose(split.potential, s, atol=1e-8)
            np.testing.assert_allclose(split.residual.values, cyc, atol=1e-8)
            assert split.orthogonality < 1e-8
            recon = split.gradient.values + split.residual.values
            np.testing.assert_allclose(recon, fld.values, rtol=0,
                                       atol=4 * np.finfo(float).eps * np.abs(fld.values).max())

    def test_orthogonality_against_random_gradients(self, rng):
        g = _random_connected_graph(rng, 8)
        w = rng.uniform(0.2, 3.0, size=g.m)
        split = hodge_decompose(EdgeField(g, rng.normal(size=g.m)), w)
        for _ in range(10):
            ds = field_from_scores(rng.normal(size=8), g).values
            assert abs(np.sum(w * ds * split.residual.values)) < 1e-8 * (1 + np.abs(ds).max())

    def test_large_graph_uses_iterative_solver(self, rng, monkeypatch):
        from influence_ledger import fields

        monkeypatch.setattr(fields, "DENSE_SOLVE_LIMIT", 10)
        g = _random_connected_graph(rng, 40, p=0.2)
        s = rng.normal(size=40)
        split = hodge_decompose(field_from_scores(s, g))
        np.testing.assert_allclose(split.potential, s - s.mean(), atol=1e-8)

    def test_bad_weights(self):
        with pytest.raises(EdgeFieldError):
            hodge_decompose(CYCLIC, [1.0, 0.0, 1.0])
        with pytest.raises(EdgeFieldError):
            hodge_decompose(CYCLIC, [1.0, 1.0])


class TestDimensionGap:
    def test_examples(self):
        assert [dimension_gap(n) for n in (2, 3, 4)] == [0, 1, 3]

    def test_rank_identity(self):
        for n in range(2, 9):
            assert score_map_rank(n) == n - 1
            assert n * (n - 1) // 2 - score_map_rank(n) == dimension_gap(n)
            assert dimension_gap(n) == (n - 1) * (n - 2) // 2


def test_curl_table_rows_and_worst(rng):
    items = ItemTable.from_array(rng.normal(size=(5, 2)))
    table = curl_table(factor_fields("pig", BILINEAR, items))
    rows = table.rows()
    assert len(rows) == 10 and rows[0][:3] == [0, 1, 2]
    order = table.worst(10)
    mags = np.max(np.abs(table.kappa), axis=1)[order]
    assert np.all(np.diff(mags) <= 0)
    assert [r[:3] for r in table.rows(3)] == sorted(list(table.triangles[t]) for t in order[:3])
    summary = table.to_json(worst=2)
    assert summary["n_triangles"] == 10 and len(summary["worst"]) == 2
