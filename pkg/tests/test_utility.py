import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mumarket.errors import DomainError, RangeError
from mumarket.utility import (
    CompositeEntropicLog,
    Crra,
    Exponential,
    Hara,
    LogPenalty,
    PowerPenalty,
    RelativeEntropy,
    RiskMeasure,
    penalty_from_dict,
    utility_from_dict,
)

SPECS = [
    Exponential([0.3, 0.7], 1.3),
    Hara([0.3, 0.7], 1.0, 0.8, 0.5),
    Hara([0.3, 0.7], 2.0, 0.2, -1.5),
    Hara([0.3, 0.7], 1.0, 0.5, 0.0),
    Crra([0.3, 0.7], 0.4),
    RiskMeasure(RelativeEntropy([0.3, 0.7], 0.9)),
    CompositeEntropicLog([0.3, 0.7], 1.1, 0.4, 1.0),
]


def test_exponential_at_zero():
    assert Exponential([0.5, 0.5], 1.0).value([0.0, 0.0]) == pytest.approx(-1.0, abs=1e-15)


def test_crra_value():
    assert Crra([0.5, 0.5], 0.5).value([4.0, 9.0]) == pytest.approx(2.5, abs=1e-14)


def test_entropic_risk_closed_form():
    U = RiskMeasure(RelativeEntropy([0.5, 0.5], 1.0))
    expected = -math.log(0.5 * math.exp(-1) + 0.5 * math.exp(-2))
    assert U.value([1.0, 2.0]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(1.3799, abs=1e-4)


def test_inverse_marginal_examples():
    assert Exponential([0.5, 0.5], 1.0).inverse_marginal(0, 0.5 * math.exp(-2)) == pytest.approx(2.0, abs=1e-14)
    U = Crra([0.5, 0.5], 0.5)
    # marginal 0.5 * 0.5 * w^-0.5 at w = 4 is 0.125
    assert U.inverse_marginal(0, 0.125) == pytest.approx(4.0, rel=1e-14)


def test_inverse_marginal_range_error():
    with pytest.raises(RangeError):
        Exponential([0.5, 0.5], 1.0).inverse_marginal(0, 0.0)


def test_domains():
    assert not Hara([1 / 3, 1 / 3, 1 / 3], 1.0, 0.8, 0.5).domain_contains([-1.5, 0.0, 0.0])
    assert Exponential([0.5, 0.5], 1.0).domain_contains([-1e3, 1e3])
    assert not Crra([0.5, 0.5], 0.5).domain_contains([0.0, 1.0])
    with pytest.raises(DomainError):
        Crra([0.5, 0.5], 0.5).value([0.0, 1.0])


@pytest.mark.parametrize("bad", [
    lambda: Exponential([0.5, 0.5], 0.0),
    lambda: Hara([0.5, 0.5], 1.0, 0.0, 1.0),
    lambda: Hara([0.5, 0.5], -1.0, 0.0, 0.5),
    lambda: Crra([0.5, 0.5], 1.2),
    lambda: Exponential([1.0, 0.0], 1.0),
    lambda: PowerPenalty([0.5, 0.5], 0.0),
    lambda: RiskMeasure(LogPenalty([0.5, 0.5])),
])
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("U", SPECS, ids=lambda u: u.family)
def test_gradient_matches_finite_differences(U):
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = rng.uniform(0.5, 3.0, 2)
        g = U.gradient(w)
        h = 1e-6
        fd = np.array([(U.value(w + h * e) - U.value(w - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("U", SPECS, ids=lambda u: u.family)
def test_uniform_wealth_price_is_belief(U):
    g = U.gradient([1.7, 1.7])
    np.testing.assert_allclose(g / g.sum(), U.belief, atol=1e-12)


@pytest.mark.parametrize("U", SPECS, ids=lambda u: u.family)
def test_concave_and_increasing(U):
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.uniform(0.5, 3.0, 2), rng.uniform(0.5, 3.0, 2)
        assert U.value(0.5 * (a + b)) >= 0.5 * (U.value(a) + U.value(b)) - 1e-12
        assert U.value(a + 0.1) > U.value(a)


@pytest.mark.parametrize("U", [s for s in SPECS if s.separable], ids=lambda u: f"{u.family}")
@settings(max_examples=50, deadline=None)
@given(w=st.floats(0.05, 50.0))
def test_inverse_marginal_round_trip(U, w):
    m = U.gradient([w, w])[1]
    assert U.inverse_marginal(1, m) == pytest.approx(w, rel=1e-9)


@pytest.mark.parametrize("U", SPECS, ids=lambda u: u.family)
def test_dict_round_trip(U):
    V = utility_from_dict(U.to_dict())
    assert V.to_dict() == U.to_dict()
    w = np.array([1.2, 2.3])
    assert V.value(w) == U.value(w)


def test_penalty_round_trip_and_marginals():
    for pen in (RelativeEntropy([0.2, 0.8], 1.5), PowerPenalty([0.2, 0.8], -0.5, 2.0), LogPenalty([0.2, 0.8], 0.7)):
        assert penalty_from_dict(pen.to_dict()).to_dict() == pen.to_dict()
        q = np.array([0.4, 0.6])
        for i in range(2):
            h = 1e-7
            e = np.eye(2)[i] * h
            fd = (pen.value(q + e) - pen.value(q - e)) / (2 * h)
            assert pen.marginal(i, q[i]) == pytest.approx(fd, rel=1e-6)
            assert pen.marginal_inverse(i, pen.marginal(i, q[i])) == pytest.approx(q[i], rel=1e-12)


def test_relative_entropy_zero_entry():
    pen = RelativeEntropy([0.5, 0.5], 1.0)
    assert pen.value([0.0, 1.0]) == pytest.approx(math.log(2.0))
    with pytest.raises(RangeError):
        pen.marginal(0, 0.0)


def test_log_member_of_hara():
    U = Hara([0.5, 0.5], 1.0, 0.0, 0.0)
    assert U.value([math.e, math.e]) == pytest.approx(1.0)
