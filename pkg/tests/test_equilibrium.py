import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mumarket.equilibrium import (
    aggregate_penalty_price,
    crra_limiting_price,
    delta_x,
    dual_power_mean_price,
    exp_limiting_price,
    exp_price_update,
    fit_crra_weights,
    hara_approx_price,
    kld,
    omega_dagger,
    pareto_frontier,
    penalty_stationary_point,
    power_mean_price,
    risk_measure_equilibrium,
    solve_pareto,
    wealth_weighted_price,
)
from mumarket.errors import DomainError, UnsupportedError
from mumarket.oracles import project_simplex, simplex_optimize, summed_penalty
from mumarket.utility import Crra, Exponential, Hara, LogPenalty, PowerPenalty, RelativeEntropy, RiskMeasure

TH = np.array([0.3, 0.3, 0.4])
PIS = [np.array([0.6, 0.2, 0.2]), np.array([0.2, 0.2, 0.6])]


def test_symmetric_no_trade_equilibrium():
    U = Hara(TH, 1.0, 0.5, 0.3)
    Vs = [Hara(TH, 1.0, 0.5, 0.3), Hara(TH, 1.0, 0.5, 0.3)]
    sol = solve_pareto([1.0, 1.0], U, Vs, 2.0, [2.0, 2.0])
    np.testing.assert_allclose(sol.allocation(), 2.0, atol=1e-9)
    np.testing.assert_allclose(sol.y_star, 2.0, atol=1e-9)
    np.testing.assert_allclose(sol.price, TH, atol=1e-12)


def test_pareto_exponential_matches_closed_form():
    alphas = [0.7, 2.5]
    U = Exponential(TH, 1.3)
    Vs = [Exponential(p, a) for p, a in zip(PIS, alphas)]
    sol = solve_pareto(1 / np.array(alphas), U, Vs, 1.0, [2.0, 3.0])
    np.testing.assert_allclose(sol.price, exp_limiting_price(TH, 1.3, PIS, alphas), atol=1e-12)
    assert sol.kkt_residual <= 1e-8


def test_pareto_scale_invariance_and_invariants():
    U = Hara(TH, 1.0, 0.8, 0.5)
    Vs = [Hara(p, 1.0, 0.0, 0.5) for p in PIS]
    a = solve_pareto([1.0, 2.0], U, Vs, 1.0, [10.0, 10.0])
    b = solve_pareto([3.0, 6.0], U, Vs, 1.0, [10.0, 10.0])
    np.testing.assert_allclose(a.allocation(), b.allocation(), atol=1e-9)
    assert np.max(np.abs(a.y_star + a.allocation().sum(axis=0) - 21.0)) <= 1e-9
    assert abs(U.value(a.y_star) - U.value(np.ones(3))) <= 1e-9
    g = U.gradient(a.y_star)
    np.testing.assert_allclose(a.price, g / g.sum(), atol=1e-15)
    assert a.lam > 0


def test_frontier_is_non_dominated():
    U = Hara(TH, 1.0, 0.8, 0.5)
    Vs = [Hara(p, 1.0, 0.0, 0.5) for p in PIS]
    grid = [np.array([t, 1 - t]) for t in np.linspace(0.05, 0.95, 15)]
    vals = pareto_frontier(grid, U, Vs, 1.0, [10.0, 10.0])
    # increasing weight on trader 1 moves along the frontier: V1 up, V2 down
    assert np.all(np.diff(vals[:, 0]) > 0) and np.all(np.diff(vals[:, 1]) < 0)
    for i in range(len(vals)):
        for j in range(len(vals)):
            if i != j:
                assert not np.all(vals[i] >= vals[j] + 1e-12)


def test_pareto_unsupported_family():
    with pytest.raises(UnsupportedError):
        solve_pareto([1.0], RiskMeasure(RelativeEntropy(TH, 1.0)), [Exponential(TH, 1.0)], 1.0, [1.0])


def test_risk_measure_equilibrium_single_agreeing_trader():
    sol = risk_measure_equilibrium([RelativeEntropy(TH, 1.0), RelativeEntropy(TH, 2.0)], 1.0, [1.0])
    np.testing.assert_allclose(sol.price, TH, atol=1e-14)


def test_risk_measure_equilibrium_geometric_mean():
    pens = [RelativeEntropy(TH, 1.5), RelativeEntropy(PIS[0], 0.8), RelativeEntropy(PIS[1], 0.8)]
    sol = risk_measure_equilibrium(pens, 1.0, [2.0, 3.0])
    np.testing.assert_allclose(sol.price, exp_limiting_price(TH, 1.5, PIS, [0.8, 0.8]), atol=1e-12)
    q, _, _ = simplex_optimize(*summed_penalty(pens), 3)
    np.testing.assert_allclose(sol.price, q, atol=1e-8)
    assert sol.kkt_residual <= 1e-9


def test_log_penalty_arithmetic_mean():
    p = aggregate_penalty_price([LogPenalty([0.5, 0.5], 1.0), LogPenalty([0.8, 0.2], 1.0)])
    np.testing.assert_allclose(p, [0.65, 0.35], atol=1e-15)


def test_power_penalty_small_gamma_is_arithmetic_mean():
    for g in (1e-6, -1e-6):
        pens = [PowerPenalty([0.5, 0.5], g, 1.0), PowerPenalty([0.8, 0.2], g, 1.0)]
        np.testing.assert_allclose(penalty_stationary_point(pens).price, [0.65, 0.35], atol=1e-6)
        np.testing.assert_allclose(power_mean_price([0.5, 0.5], [[0.8, 0.2]], [1, 1], g), [0.65, 0.35], atol=1e-6)


@pytest.mark.parametrize("gamma", [-1.0, -0.5, 0.5])
def test_power_penalty_stationary_point_is_a_maximum_at_the_dual_form(gamma):
    pens = [PowerPenalty(TH, gamma, 1.0), PowerPenalty(PIS[0], gamma, 2.0), PowerPenalty(PIS[1], gamma, 0.5)]
    sp = penalty_stationary_point(pens)
    assert sp.kind == "max"
    q, _, _ = simplex_optimize(*summed_penalty(pens), 3, maximize=True)
    np.testing.assert_allclose(q, dual_power_mean_price(TH, PIS, [1.0, 2.0, 0.5], gamma), atol=1e-8)
    np.testing.assert_allclose(sp.price, q, atol=1e-8)
    assert np.max(np.abs(q - power_mean_price(TH, PIS, [1.0, 2.0, 0.5], gamma))) > 1e-3


def test_mixed_penalties_use_nested_root():
    pens = [PowerPenalty(TH, 0.5, 1.0), LogPenalty(PIS[0], 0.3), PowerPenalty(PIS[1], -0.5, 2.0)]
    p = aggregate_penalty_price(pens)
    q, _, _ = simplex_optimize(*summed_penalty(pens), 3, maximize=True)
    np.testing.assert_allclose(p, q, atol=1e-8)


def test_exp_limit_examples():
    np.testing.assert_allclose(exp_limiting_price([0.5, 0.5], 1.0, [[0.8, 0.2]], [1.0]), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(exp_limiting_price(TH, 2.0, [TH, TH], [1.0, 3.0]), TH, atol=1e-15)


def test_exp_price_update_limits():
    p = np.array([0.2, 0.5, 0.3])
    # a very risk-averse trader only unwinds its holding: p_i ∝ p_i exp(-beta x_i)
    x = np.array([1.0, 2.0, 0.5])
    lim = p * np.exp(-1.0 * x)
    np.testing.assert_allclose(exp_price_update(p, x, PIS[0], 1e12, 1.0), lim / lim.sum(), atol=1e-9)
    np.testing.assert_allclose(exp_price_update(p, np.full(3, 4.0), PIS[0], 1e12, 1.0), p, atol=1e-9)
    np.testing.assert_allclose(exp_price_update(p, [1.5, 1.5, 1.5], p, 0.7, 1.2), p, atol=1e-15)


def test_exp_update_iterates_to_limit():
    alphas, beta = [0.7, 1.9], 1.2
    U = Exponential(TH, beta)
    x = [np.full(3, 2.0), np.full(3, 3.0)]
    y = np.full(3, 1.0)
    from mumarket.trader import best_response

    p = TH.copy()
    for k in range(400):
        j = k % 2
        V = Exponential(PIS[j], alphas[j])
        p = exp_price_update(p, x[j], PIS[j], alphas[j], beta)
        z = best_response(V, U, x[j], y, 1.0).z
        x[j] = x[j] + z
        y = y - z
    np.testing.assert_allclose(p, exp_limiting_price(TH, beta, PIS, alphas), atol=1e-8)


def test_power_mean_examples():
    np.testing.assert_allclose(power_mean_price(TH, PIS, [1, 2, 3], 0.0), (TH + 2 * PIS[0] + 3 * PIS[1]) / 6, atol=1e-15)
    np.testing.assert_allclose(power_mean_price(TH, PIS, [0, 1, 0], 0.4), PIS[0], atol=1e-15)
    np.testing.assert_allclose(crra_limiting_price(TH, PIS, 1.0, [2.0, 3.0], 0.4), power_mean_price(TH, PIS, [1, 2, 3], 0.4))
    np.testing.assert_allclose(crra_limiting_price(TH, [TH, TH], 1.0, [2.0, 3.0], 0.4), TH, atol=1e-15)
    with pytest.raises(DomainError):
        power_mean_price(TH, PIS, [0, 0, 0], 0.3)


def test_omega_dagger_examples():
    np.testing.assert_allclose(omega_dagger([1, 1], [0, 0], [3.0, 7.0], 0.0), [3.0, 7.0])
    assert omega_dagger([1], [0], [4.0], 0.5)[0] == pytest.approx(math.sqrt(8))


def test_hara_approx_limits():
    w_hat = np.array([4.0, 6.0])
    base = (2.0 * TH + 4.0 * PIS[0] + 6.0 * PIS[1]) / 12.0
    np.testing.assert_allclose(hara_approx_price(TH, PIS, 2.0, w_hat, 0.0), base, atol=1e-15)
    np.testing.assert_array_equal(hara_approx_price(TH, PIS, 2.0, w_hat, 0.0), wealth_weighted_price(TH, PIS, 2.0, w_hat))
    wts = np.array([2.0, 4.0, 6.0]) / 12.0
    geo = np.exp(wts @ np.log(np.vstack([TH] + PIS)))
    np.testing.assert_allclose(hara_approx_price(TH, PIS, 2.0, w_hat, -50.0), geo / geo.sum(), atol=1e-3)


def test_crra_weight_fit_reproduces_simulation():
    from mumarket.config import MarketConfig, MarketMakerConfig, TraderConfig
    from mumarket.engine import Random, run

    g = 0.5
    mm = MarketMakerConfig(Crra(TH, g), 4.0)
    traders = tuple(TraderConfig(Crra(p, g), w) for p, w in zip(PIS, (3.0, 5.0)))
    traj = run(MarketConfig(3, mm, traders, Random(4)))
    h = fit_crra_weights(traj.final_price, TH, PIS, g)
    assert np.all(h >= 0)
    np.testing.assert_allclose(crra_limiting_price(TH, PIS, h[0], h[1:], g), traj.final_price, atol=1e-6)


def test_kld_and_delta_x():
    assert kld([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kld([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-15)
    assert kld([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)
    with pytest.raises(DomainError):
        kld([0.5, 0.5], [1.0, 0.0])
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert delta_x(x, x) == 0.0
    assert delta_x(x, 2 * x) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8))
def test_simplex_projection(v):
    p = project_simplex(v)
    assert abs(p.sum() - 1.0) <= 1e-9 and np.all(p >= 0)
    # projection is idempotent
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)
