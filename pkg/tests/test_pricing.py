import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mumarket.errors import DomainError
from mumarket.pricing import cost_function_value, induced_scoring_rule, instantaneous_price, price_order
from mumarket.utility import Crra, Exponential, Hara, RelativeEntropy, RiskMeasure

EXP = Exponential([0.5, 0.5], 1.0)
MARKETS = [
    EXP,
    Hara([0.2, 0.3, 0.5], 1.0, 0.8, 0.5),
    Crra([0.2, 0.3, 0.5], 0.5),
    RiskMeasure(RelativeEntropy([0.2, 0.3, 0.5], 1.2)),
]


def test_zero_order_costs_nothing():
    assert price_order(EXP, [1.0, 1.0], 1.0, [0.0, 0.0]).delta_w == 0.0


@pytest.mark.parametrize("U", MARKETS, ids=lambda u: u.family)
def test_sure_bet_costs_face_value(U):
    n = U.n_outcomes
    q = price_order(U, np.full(n, 2.0), 2.0, np.full(n, 0.7))
    assert q.delta_w == pytest.approx(0.7, abs=1e-12)


def test_exponential_unit_order():
    # 0.5 e^{1 - w} + 0.5 e^{-w} = 1  =>  w = ln(0.5 (e + 1))
    q = price_order(EXP, [1.0, 1.0], 1.0, [1.0, 0.0])
    assert q.delta_w == pytest.approx(math.log(0.5 * (math.e + 1)), abs=1e-12)
    assert q.delta_w == pytest.approx(0.620115, abs=1e-6)


def test_post_state_is_binding():
    U = MARKETS[1]
    q = price_order(U, np.full(3, 1.0), 1.0, [0.9, -0.3, 0.1])
    assert U.value(q.post_y) == pytest.approx(U.value(np.full(3, 1.0)), abs=1e-12)


def test_price_examples():
    np.testing.assert_allclose(instantaneous_price(EXP, [1.0, 2.0])[0], 1 / (1 + math.exp(-1)), atol=1e-12)
    for U in MARKETS:
        np.testing.assert_allclose(instantaneous_price(U, np.full(U.n_outcomes, 3.0)), U.belief, atol=1e-12)


def test_price_outside_domain():
    with pytest.raises(DomainError):
        instantaneous_price(Crra([0.5, 0.5], 0.5), [0.0, 1.0])


@pytest.mark.parametrize("U", MARKETS, ids=lambda u: u.family)
def test_cost_function_basics(U):
    n = U.n_outcomes
    assert cost_function_value(U, 1.5, np.zeros(n)) == pytest.approx(1.5, abs=1e-12)
    q = np.linspace(-0.4, 0.6, n)
    base = cost_function_value(U, 1.5, q)
    for t in (-0.3, 0.8):
        assert cost_function_value(U, 1.5, q + t) == pytest.approx(base + t, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.8, 0.8), min_size=3, max_size=3), st.lists(st.floats(-0.8, 0.8), min_size=3, max_size=3))
def test_cost_function_monotone_and_convex(q1, q2):
    U = MARKETS[3]
    q1, q2 = np.array(q1), np.array(q2)
    mid = cost_function_value(U, 1.0, 0.5 * (q1 + q2))
    assert mid <= 0.5 * (cost_function_value(U, 1.0, q1) + cost_function_value(U, 1.0, q2)) + 1e-10
    assert cost_function_value(U, 1.0, q1 + np.array([0.1, 0, 0])) >= cost_function_value(U, 1.0, q1) - 1e-12


def test_scoring_rule_symmetric_case():
    np.testing.assert_allclose(induced_scoring_rule(EXP, 1.0, [0.5, 0.5]), [-1.0, -1.0], atol=1e-12)


def test_scoring_rule_is_proper():
    U = MARKETS[1]
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, r = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        assert p @ induced_scoring_rule(U, 1.0, p) >= p @ induced_scoring_rule(U, 1.0, r) - 1e-12
