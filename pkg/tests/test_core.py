import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from influence_ledger import (
    AdditiveModel,
    BlackBoxModel,
    ItemTable,
    LinearModel,
    QuadraticModel,
    build_pair_distribution,
    model_from_config,
    pair_margin,
    ranking_from_scores,
    score_items,
)
from influence_ledger.errors import (
    EmptySupportError,
    InvalidInputError,
    ModelEvaluationError,
    TieError,
)

from conftest import random_items

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_linear_score_direct_substitution():
    items = ItemTable.from_array([[2.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(score_items(LinearModel([1, 1]), items), [2.0, 1.0])


def test_zero_weights_score_zero(rng):
    items = random_items(rng)
    assert np.all(score_items(LinearModel(np.zeros(items.d)), items) == 0.0)


def test_bilinear_quadratic_value():
    m = QuadraticModel([[0, 1], [1, 0]], [0, 0])
    assert m.value([3.0, 4.0]) == 12.0


def test_pair_margin_examples():
    items = ItemTable.from_array([[3.0], [1.0]])
    assert pair_margin(LinearModel([1.0]), items, 0, 1) == 2.0
    with pytest.raises(InvalidInputError):
        pair_margin(LinearModel([1.0]), items, 0, 0)
    bil = QuadraticModel([[0, 1], [1, 0]], [0, 0])
    pts = ItemTable.from_array([[3.0, 4.0], [1.0, 2.0]])
    assert pair_margin(bil, pts, 0, 1) == 10.0


def test_dimension_mismatch_and_nonfinite():
    items = ItemTable.from_array([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(InvalidInputError):
        score_items(LinearModel([1.0, 2.0, 3.0]), items)
    bad = BlackBoxModel(lambda x: float("nan"), dim=2)
    with pytest.raises(ModelEvaluationError):
        score_items(bad, items)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=8, unique=True),
       st.tuples(finite, finite))
def test_margin_antisymmetry(rows, w):
    items = ItemTable.from_array(np.array(rows))
    model = LinearModel(np.array(w))
    for i in range(items.n):
        for j in range(items.n):
            if i != j:
                assert pair_margin(model, items, i, j) + pair_margin(model, items, j, i) == 0.0


@pytest.mark.parametrize("g", [lambda x: x ** 3 + x, np.exp])
def test_monotone_transform_keeps_ranking(rng, g):
    for _ in range(20):
        s = rng.normal(size=12)
        assert ranking_from_scores(s) == ranking_from_scores(g(s))


def test_item_table_invariants():
    with pytest.raises(InvalidInputError):
        ItemTable(("a", "a"), np.zeros((2, 1)), ("f",))
    with pytest.raises(InvalidInputError):
        ItemTable(("a",), np.zeros((1, 1)), ("f",))
    with pytest.raises(InvalidInputError):
        ItemTable.from_array([[1.0, np.inf], [0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        ItemTable(("a", "b"), np.zeros((2, 0)), ())


def test_item_csv_round_trip(tmp_path):
    p = tmp_path / "items.csv"
    p.write_text("item_id,price,quality\nA,1.5,2\nB,-0.25,3e1\n", encoding="utf-8")
    items = ItemTable.from_csv(p)
    assert items.ids == ("A", "B")
    assert items.factor_names == ("price", "quality")
    np.testing.assert_array_equal(items.features, [[1.5, 2.0], [-0.25, 30.0]])


def test_item_csv_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        ItemTable.from_csv(tmp_path / "missing.csv")
    p = tmp_path / "bad.csv"
    p.write_text("id,x\nA,1\nB,2\n")
    with pytest.raises(InvalidInputError):
        ItemTable.from_csv(p)
    p.write_text("item_id,x\nA,1\nB,oops\n")
    with pytest.raises(InvalidInputError):
        ItemTable.from_csv(p)


def test_model_configs():
    assert isinstance(model_from_config({"family": "linear", "w": [1, 2]}), LinearModel)
    q = model_from_config({"family": "quadratic", "Q": [[1, 0], [0, 1]], "w": [0, 0], "c": 1})
    assert q.value([0.0, 0.0]) == 1.0
    a = model_from_config({"family": "additive", "poly": [[0, 1], [1, 0, 2]]})
    assert a.value([2.0, 3.0]) == pytest.approx(2.0 + 1.0 + 18.0)
    for bad in ({"w": [1]}, {"family": "cubic"}, {"family": "linear"},
                {"family": "quadratic", "Q": [[0, 1], [0, 0]], "w": [0, 0]}):
        with pytest.raises(InvalidInputError):
            model_from_config(bad)


def test_quadratic_symmetry_tolerance():
    QuadraticModel([[0, 1], [1 + 5e-13, 0]], [0, 0])
    with pytest.raises(InvalidInputError):
        QuadraticModel([[0, 1], [1 + 1e-9, 0]], [0, 0])


def _random_models(rng, d):
    A = rng.normal(size=(d, d))
    return [
        LinearModel(rng.normal(size=d)),
        AdditiveModel(rng.normal(size=(d, 4))),
        QuadraticModel(A + A.T, rng.normal(size=d), 0.3),
    ]


def test_finite_difference_gradients_match_analytic(rng):
    d = 4
    for model in _random_models(rng, d):
        for _ in range(10):
            x = rng.normal(size=d)
            g = model.gradient(x)
            fd = model.fd_gradient(x)
            np.testing.assert_allclose(fd, g, rtol=1e-6, atol=1e-6 * (1 + np.abs(g).max()))


def test_fd_mode_and_blackbox_mixed_partials(rng):
    A = rng.normal(size=(3, 3))
    model = QuadraticModel(A + A.T, rng.normal(size=3))
    fd_model = QuadraticModel(A + A.T, model.w, derivatives="fd")
    x = rng.normal(size=3)
    np.testing.assert_allclose(fd_model.hessian(x), model.hessian(x), atol=1e-5)
    bb = BlackBoxModel(lambda v: v[0] * v[1] + np.sin(v[2]), dim=3)
    assert bb.mixed_partial(0, 1, x) == pytest.approx(1.0, abs=1e-5)
    np.testing.assert_allclose(bb.gradient(x), [x[1], x[0], np.cos(x[2])], rtol=1e-7, atol=1e-9)


class TestPairDistributions:
    def test_uniform_three_items(self):
        items = ItemTable.from_array([[0.0], [1.0], [3.0]])
        dist = build_pair_distribution({"type": "uniform_informative"}, items, LinearModel([1.0]))
        assert dist.pairs == [(0, 1, pytest.approx(1 / 3)), (0, 2, pytest.approx(1 / 3)),
                              (1, 2, pytest.approx(1 / 3))]

    def test_explicit_normalization(self):
        items = ItemTable.from_array([[0.0], [1.0], [3.0]])
        dist = build_pair_distribution({"type": "explicit", "pairs": [[0, 1, 2], [1, 2, 2]]}, items)
        np.testing.assert_allclose(dist.weights, [0.5, 0.5])
        assert abs(dist.weights.sum() - 1) < 1e-15

    def test_identical_rows_empty_support(self):
        items = ItemTable.from_array([[1.0, 2.0]] * 3)
        with pytest.raises(EmptySupportError):
            build_pair_distribution({"type": "uniform_informative"}, items, LinearModel([1, 1]))

    def test_explicit_errors(self):
        items = ItemTable.from_array([[0.0], [1.0]])
        with pytest.raises(InvalidInputError):
            build_pair_distribution({"type": "explicit", "pairs": [[0, 1, -1]]}, items)
        with pytest.raises(EmptySupportError):
            build_pair_distribution({"type": "explicit", "pairs": [[0, 1, 0]]}, items)
        with pytest.raises(InvalidInputError):
            build_pair_distribution({"type": "explicit", "pairs": [[0, 0, 1]]}, items)
        with pytest.raises(InvalidInputError):
            build_pair_distribution({"type": "explicit", "pairs": [[0, 5, 1]]}, items)

    def test_tie_policies(self):
        # (1,0) and (0,1) tie under w=(1,1) but carry effort.
        items = ItemTable.from_array([[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]])
        model = LinearModel([1.0, 1.0])
        dist = build_pair_distribution({"type": "uniform_informative"}, items, model)
        assert [(i, j) for i, j, _ in dist.pairs] == [(0, 2), (1, 2)]
        with pytest.raises(TieError) as err:
            build_pair_distribution({"type": "uniform_informative"}, items, model, "error")
        assert err.value.pairs == [(0, 1)]

    def test_top_k_exposure(self):
        items = ItemTable.from_array([[5.0], [1.0], [4.0], [0.0]])
        dist = build_pair_distribution({"type": "top_k_exposure", "k": 2}, items, LinearModel([1.0]))
        assert dist.pairs == [(0, 2, 1.0)]

    def test_informative_support_for_nonlinear(self, rng):
        items = random_items(rng, n=5, d=2)
        model = QuadraticModel([[0, 1], [1, 0]], [0.5, -0.2])
        dist = build_pair_distribution({"type": "uniform_informative"}, items, model)
        assert len(dist) == 10
