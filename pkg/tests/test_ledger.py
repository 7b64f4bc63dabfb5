from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from influence_ledger import (
    ItemTable,
    LinearModel,
    ModelState,
    PairDistribution,
    factor_contributions,
    global_influence,
    influence_exchange,
    influence_share,
    local_decomposition,
    pair_margin,
    refine_effort,
)
from influence_ledger.errors import InvalidInputError, UninformativePairError
from influence_ledger.ledger import block_shares, ledger_rows, share_rule

from conftest import random_distribution, random_items, random_linear_state


def test_worked_linear_example():
    items = ItemTable.from_array([[3.0, 0.0], [0.0, 2.0]])
    dec = local_decomposition([1.0, 1.0], items, 0, 1)
    np.testing.assert_array_equal(dec.contributions, [3.0, -2.0])
    assert dec.margin == 1.0
    assert dec.effort == 5.0
    np.testing.assert_array_equal(dec.shares, [0.6, 0.4])


def test_contribution_examples():
    items = ItemTable.from_array([[2.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    c = factor_contributions([1.0, 1.0], items, 0, 1)
    np.testing.assert_array_equal(c, [2.0, -1.0])
    assert c.sum() == 1.0
    np.testing.assert_array_equal(factor_contributions([1.0, 1.0], items, 0, 2), [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        factor_contributions([1.0], items, 0, 1)


def test_share_examples():
    np.testing.assert_array_equal(influence_share([3.0, -2.0]), [0.6, 0.4])
    assert influence_share([0.0, 0.0]) is None
    np.testing.assert_array_equal(influence_share([5.0, 0.0, 0.0]), [1.0, 0.0, 0.0])


def test_refinement_examples():
    np.testing.assert_allclose(refine_effort([3.0, 2.0], 0, (2.0, 1.0)), [0.4, 0.2, 0.4],
                               rtol=0, atol=1e-15)
    np.testing.assert_array_equal(refine_effort([3.0, 2.0], 0, (3.0, 0.0)), [0.6, 0.0, 0.4])
    np.testing.assert_array_equal(refine_effort([0.0, 5.0], 0, (0.0, 0.0)), [0.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        refine_effort([3.0, 2.0], 0, (-1.0, 4.0))
    with pytest.raises(InvalidInputError):
        refine_effort([3.0, 2.0], 0, (1.0, 1.0))


def test_refinement_matches_share_rule_of_refined_vector(rng):
    # the L1 rule applied to the refined vector is the refinement identity
    for _ in range(100):
        a = rng.exponential(size=rng.integers(1, 7))
        k = int(rng.integers(len(a)))
        r = a[k] * rng.uniform()
        refined = np.concatenate([a[:k], [r, a[k] - r], a[k + 1:]])
        np.testing.assert_allclose(refine_effort(a, k, (r, a[k] - r)), share_rule(refined),
                                   atol=1e-12)


def test_global_influence_examples():
    items = ItemTable.from_array([[3.0, 0.0], [0.0, 2.0]])
    state = ModelState("lin", LinearModel([1.0, 1.0]))
    dist = PairDistribution.from_pairs([(0, 1, 1.0)])
    np.testing.assert_allclose(global_influence(state, items, dist), [0.6, 0.4])

    items = ItemTable.from_array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    dist = PairDistribution.from_pairs([(0, 1, 1.0), (2, 1, 1.0)])
    np.testing.assert_allclose(global_influence(state, items, dist), [0.5, 0.5])


def test_uninformative_pair_in_support_raises():
    items = ItemTable.from_array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    state = ModelState("s", LinearModel([1.0, 1.0]))
    dist = PairDistribution.from_pairs([(0, 1, 1.0), (0, 2, 1.0)])
    with pytest.raises(UninformativePairError) as err:
        global_influence(state, items, dist)
    assert err.value.pair == (0, 1)


def test_nonlinear_model_rejected():
    from influence_ledger import QuadraticModel

    items = ItemTable.from_array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidInputError):
        global_influence(QuadraticModel(np.eye(2), [0, 0]), items,
                         PairDistribution.from_pairs([(0, 1)]))


def test_exchange_identity_and_hand_example():
    items = ItemTable.from_array([[1.0, 1.0], [0.0, 0.0]])
    dist = PairDistribution.from_pairs([(0, 1, 1.0)])
    a = ModelState("a", LinearModel([1.0, 1.0]))
    b = ModelState("b", LinearModel([2.0, 1.0]))
    assert np.all(influence_exchange(a, a, items, dist).exchange == 0.0)
    # hand evaluation: shares (1/2, 1/2) -> (2/3, 1/3)
    expected = [Fraction(2, 3) - Fraction(1, 2), Fraction(1, 3) - Fraction(1, 2)]
    rep = influence_exchange(a, b, items, dist)
    np.testing.assert_allclose(rep.exchange, [float(e) for e in expected], atol=1e-15)
    np.testing.assert_allclose(rep.influence, [2 / 3, 1 / 3])
    assert rep.to_json()["state"] == ["a", "b"]


def test_random_conservation(rng):
    for _ in range(50):
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        items = random_items(rng, n, d)
        dist = random_distribution(rng, n)
        a, b = random_linear_state(rng, d, "a"), random_linear_state(rng, d, "b")
        rep = influence_exchange(a, b, items, dist)
        assert abs(rep.influence.sum() - 1) < 1e-10
        assert abs(rep.exchange.sum()) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=6),
       st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3))
def test_scale_gauge_leaves_shares_unchanged(w, c):
    items = ItemTable.from_array([[1.0, -2.0, 0.5, 3.0, 0.0, 1.0][: len(w)],
                                  [0.0, 1.0, 2.5, -1.0, 4.0, 0.0][: len(w)]])
    base = local_decomposition(np.array(w), items, 0, 1)
    scaled = local_decomposition(c * np.array(w), items, 0, 1)
    if base.shares is None:
        assert scaled.shares is None
    else:
        # |c w_f g_f| / sum|c w g| = |w_f g_f| / sum|w g| up to one rounding per op
        np.testing.assert_allclose(scaled.shares, base.shares, rtol=1e-14, atol=1e-300)


def test_decomposition_exactness(rng):
    for _ in range(200):
        d = int(rng.integers(1, 10))
        items = random_items(rng, 2, d)
        w = rng.normal(size=d)
        dec = local_decomposition(w, items, 0, 1)
        margin = pair_margin(LinearModel(w), items, 0, 1)
        assert abs(dec.contributions.sum() - margin) <= 1e-12 * (1 + abs(margin))
        assert np.all(dec.shares >= 0)
        assert abs(dec.shares.sum() - 1) <= 1e-12


def test_block_conservation_under_refinement(rng):
    a = rng.exponential(size=4)
    refined = refine_effort(a, 2, (0.3 * a[2], 0.7 * a[2]))
    np.testing.assert_allclose(block_shares(refined, [[0], [1], [2, 3], [4]]), share_rule(a),
                               atol=1e-12)


def test_ledger_rows_layout():
    items = ItemTable.from_array([[3.0, 0.0], [0.0, 2.0]])
    header, rows = ledger_rows(LinearModel([1.0, 1.0]), items,
                               PairDistribution.from_pairs([(0, 1, 1.0)]))
    assert header == ["i", "j", "weight", "margin", "Z", "contrib_1", "contrib_2",
                      "share_1", "share_2"]
    assert rows == [[0, 1, 1.0, 1.0, 5.0, 3.0, -2.0, 0.6, 0.4]]


@pytest.mark.parametrize("c", [2.0, -0.5, 1024.0, -1.0])
def test_power_of_two_scaling_is_bitwise_exact(rng, c):
    items = random_items(rng, 5, 4)
    w = rng.normal(size=4)
    for i, j in [(0, 1), (2, 3), (4, 0)]:
        assert np.array_equal(local_decomposition(c * w, items, i, j).shares,
                              local_decomposition(w, items, i, j).shares)
