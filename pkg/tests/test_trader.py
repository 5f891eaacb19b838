import numpy as np
import pytest

from mumarket.errors import DomainError, UnsupportedError
from mumarket.pricing import instantaneous_price
from mumarket.trader import best_response, risk_measure_descent, utility_gain
from mumarket.utility import CompositeEntropicLog, Crra, Exponential, Hara, RelativeEntropy, RiskMeasure


def test_exponential_example_price():
    U = Exponential([0.5, 0.5], 1.0)
    V = Exponential([0.8, 0.2], 1.0)
    br = best_response(V, U, [1.0, 1.0], [1.0, 1.0], 1.0)
    np.testing.assert_allclose(instantaneous_price(U, np.ones(2) - br.z), [2 / 3, 1 / 3], atol=1e-12)
    assert br.trader_utility_gain > 0


def test_agreement_gives_no_trade():
    U = Exponential([0.3, 0.7], 2.0)
    br = best_response(Exponential([0.3, 0.7], 2.0), U, [1.0, 1.0], [1.0, 1.0], 1.0)
    np.testing.assert_array_equal(br.z, 0.0)
    assert br.trader_utility_gain == 0.0


def test_zero_gain():
    assert utility_gain(Exponential([0.5, 0.5], 1.0), [1.0, 2.0], [0.0, 0.0]) == 0.0


PAIRS = [
    (Hara([0.2, 0.2, 0.6], 1.0, 0.0, 0.5), Hara([1 / 3, 1 / 3, 1 / 3], 1.0, 0.8, 0.5), 10.0, 1.0),
    (Crra([0.6, 0.2, 0.2], 0.4), Crra([0.3, 0.3, 0.4], 0.6), 2.0, 3.0),
    (Exponential([0.6, 0.2, 0.2], 0.5), Hara([0.3, 0.3, 0.4], 1.0, 0.0, -0.5), 2.0, 3.0),
    (Hara([0.1, 0.3, 0.6], 1.0, 0.0, 0.0), Exponential([0.3, 0.3, 0.4], 2.0), 2.0, 3.0),
]


@pytest.mark.parametrize("V,U,w,W0", PAIRS, ids=lambda v: getattr(v, "family", ""))
def test_kkt_and_binding(V, U, w, W0):
    x, y = np.full(3, w), np.full(3, W0)
    br = best_response(V, U, x, y, W0)
    assert br.kkt_residual <= 1e-8
    assert U.value(y - br.z) == pytest.approx(U.value(y), abs=1e-9)
    assert br.trader_utility_gain >= 0
    # no feasible perturbation along the constraint surface does better
    rng = np.random.default_rng(0)
    best = V.value(x + br.z)
    for _ in range(50):
        d = rng.normal(size=3) * 1e-3
        d -= d @ U.gradient(y - br.z) / U.gradient(y - br.z).sum()
        assert V.value(x + br.z + d) <= best + 1e-9


def test_second_response_is_vacuous():
    V, U, w, W0 = PAIRS[0]
    x, y = np.full(3, w), np.full(3, W0)
    br = best_response(V, U, x, y, W0)
    again = best_response(V, U, x + br.z, y - br.z, W0)
    assert np.max(np.abs(again.z)) <= 1e-9


def test_risk_measure_closed_form_matches_descent():
    U = RiskMeasure(RelativeEntropy([0.3, 0.3, 0.4], 1.5))
    V = RiskMeasure(RelativeEntropy([0.6, 0.1, 0.3], 0.7))
    x, y = np.array([2.0, 2.0, 2.0]), np.array([1.0, 1.0, 1.0])
    br = best_response(V, U, x, y, 1.0)
    ref = risk_measure_descent(V, U, x, y, 1.0)
    np.testing.assert_allclose(br.z, ref, atol=1e-7)
    assert br.kkt_residual <= 1e-12


def test_mixed_families_unsupported():
    U = RiskMeasure(RelativeEntropy([0.5, 0.5], 1.0))
    with pytest.raises(UnsupportedError):
        best_response(Exponential([0.5, 0.5], 1.0), U, [1.0, 1.0], [1.0, 1.0], 1.0)
    with pytest.raises(UnsupportedError):
        best_response(CompositeEntropicLog([0.5, 0.5], 1.0, 0.5, 1.0), Exponential([0.5, 0.5], 1.0),
                      [1.0, 1.0], [1.0, 1.0], 1.0)


def test_trader_outside_domain():
    with pytest.raises(DomainError):
        best_response(Crra([0.5, 0.5], 0.5), Crra([0.5, 0.5], 0.5), [0.0, 1.0], [1.0, 1.0], 1.0)
