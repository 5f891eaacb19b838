"""Limiting allocations and prices computed directly, without simulating trades.

``solve_pareto`` maximizes ``sum_j omega_j V_j(x_j)`` over allocations that
clear the market and keep the market maker at its initial utility. The
remaining functions are closed-form or approximate price formulas for the
exponential, risk-measure and HARA markets, plus the two error metrics used
by the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares

from . import _kernels as K
from .core import simplex
from .errors import DomainError, NumericalError, UnsupportedError
from .utility import LogPenalty, PowerPenalty, RelativeEntropy, RiskMeasure, UtilitySpec

PARETO_KKT_TOL = 1e-8
_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class ParetoSolution:
    x_star: tuple
    y_star: np.ndarray
    price: np.ndarray
    lam: float
    mu: np.ndarray
    kkt_residual: float

    @property
    def multipliers(self):
        return self.lam, self.mu

    def allocation(self) -> np.ndarray:
        return np.vstack(self.x_star)


def _stack_params(specs):
    kinds = np.array([s.kernel_params[0] for s in specs], dtype=np.int64)
    prm = np.vstack([s.kernel_params[1] for s in specs])
    wts_t = np.ascontiguousarray(np.vstack([s.kernel_params[2] for s in specs]).T)
    return kinds, prm, wts_t


def solve_pareto(omega, market_maker: UtilitySpec, traders, W0: float, w0) -> ParetoSolution:
    """Weighted Pareto allocation for separable expected-utility agents.

    Stationarity reads ``omega_j V_j'(x_ij) = mu_i = lam U'(y_i)``. For fixed
    ``lam`` each state ``i`` is a monotone root in ``log mu_i`` of the
    clearing condition; ``lam`` itself is the monotone root of the binding
    market-maker constraint.
    """
    specs = list(traders) + [market_maker]
    if not all(s.separable for s in specs):
        raise UnsupportedError("solve_pareto needs separable expected-utility agents")
    omega = np.asarray(omega, dtype=float)
    J = len(traders)
    if omega.shape != (J,) or not np.all(omega > 0):
        raise DomainError("omega must hold one positive weight per trader")
    n = market_maker.n_outcomes
    w0 = np.asarray(w0, dtype=float)
    total = float(W0 + w0.sum())
    u0 = market_maker.value(np.full(n, W0))

    kinds, prm, wts_t = _stack_params(specs)
    log_omega = np.log(omega)
    # rescaling omega leaves the solution unchanged; centre it for conditioning
    log_omega = log_omega - log_omega.mean()
    alloc = np.empty((J + 1, n))
    s_guess = np.array(market_maker.log_gradient(np.full(n, W0)))
    llam, status = K.pareto(kinds, prm, wts_t, log_omega, total, u0, alloc, s_guess)
    if status != 0:
        raise NumericalError(f"Pareto root search failed (status {status}) for omega={omega.tolist()}")

    x_star = tuple(alloc[j].copy() for j in range(J))
    y_star = alloc[J].copy()
    # stationarity residual relative to the recovered multipliers
    worst = 0.0
    for j, V in enumerate(traders):
        d = log_omega[j] + V.log_gradient(x_star[j]) - s_guess
        worst = max(worst, float(np.max(np.abs(np.expm1(d)))))
    d = llam + market_maker.log_gradient(y_star) - s_guess
    worst = max(worst, float(np.max(np.abs(np.expm1(d)))))
    clearing = float(np.max(np.abs(alloc.sum(axis=0) - total)))
    binding = abs(market_maker.value(y_star) - u0)
    kkt = max(worst, clearing, binding)
    if kkt > PARETO_KKT_TOL:
        raise NumericalError(f"Pareto solution KKT residual {kkt:.3e} exceeds {PARETO_KKT_TOL}")
    g = market_maker.gradient(y_star)
    # lam is reported on the original omega scale
    shift = float(np.log(omega).mean())
    return ParetoSolution(
        x_star=x_star,
        y_star=y_star,
        price=simplex(g / g.sum()),
        lam=math.exp(llam + shift),
        mu=np.exp(s_guess + shift),
        kkt_residual=kkt,
    )


def pareto_frontier(grid, market_maker, traders, W0, w0):
    """Trader utilities at ``solve_pareto`` for each weight vector in ``grid``."""
    out = []
    for omega in grid:
        sol = solve_pareto(omega, market_maker, traders, W0, w0)
        out.append([V.value(x) for V, x in zip(traders, sol.x_star)])
    return np.array(out)


# --------------------------------------------------------------------------
# risk-measure markets


def risk_measure_equilibrium(penalties, W0: float, w0, reference=None) -> ParetoSolution:
    """Limit of a relative-entropy risk-measure market.

    ``penalties[0]`` belongs to the market maker, the rest to the traders.
    Every agent ends with the same dual probability ``p*`` (the minimizer
    of the summed penalties), which fixes each position up to a riskless
    shift: ``x_k = c_k e - f_k(p*)`` with ``f_k`` the penalty marginal. The
    market maker's shift is pinned by its utility constraint; traders'
    shifts are taken from ``reference`` (a (J, I) allocation, e.g. a
    simulated limit) when given, otherwise utility gains are split evenly.
    """
    pens = list(penalties)
    if len(pens) < 2 or not all(isinstance(p, RelativeEntropy) for p in pens):
        raise UnsupportedError("risk_measure_equilibrium needs relative-entropy penalties for all agents")
    J = len(pens) - 1
    n = pens[0].belief.size
    w0 = np.asarray(w0, dtype=float)
    total = float(W0 + w0.sum())
    p = aggregate_penalty_price(pens)
    shapes = [-np.array([pen.marginal(i, p[i]) for i in range(n)]) for pen in pens]
    # sum_k f_k(p*) is constant across outcomes at the stationary point
    nu = -np.sum(shapes, axis=0)
    utils = [RiskMeasure(pen) for pen in pens]
    c_M = utils[0].value(np.full(n, W0)) - utils[0].value(shapes[0])
    budget = total + float(nu.mean()) - c_M
    if reference is not None:
        ref = np.asarray(reference, dtype=float).reshape(J, n)
        c = np.array([np.mean(ref[j] - shapes[j + 1]) for j in range(J)])
        c += (budget - c.sum()) / J
    else:
        base = np.array([utils[j + 1].value(np.full(n, w0[j])) - utils[j + 1].value(shapes[j + 1]) for j in range(J)])
        c = base + (budget - base.sum()) / J
    x_star = tuple(c[j] + shapes[j + 1] for j in range(J))
    y_star = c_M + shapes[0]
    clearing = float(np.max(np.abs(y_star + np.sum(x_star, axis=0) - total)))
    qs = [utils[0].gradient(y_star)] + [utils[j + 1].gradient(x_star[j]) for j in range(J)]
    stat = max(float(np.max(np.abs(q - p))) for q in qs)
    binding = abs(utils[0].value(y_star) - utils[0].value(np.full(n, W0)))
    return ParetoSolution(
        x_star=x_star,
        y_star=y_star,
        price=p,
        lam=1.0,
        mu=np.array(p),
        kkt_residual=max(clearing, stat, binding),
    )


# --------------------------------------------------------------------------
# stationary points of summed penalties over the simplex


@dataclass(frozen=True)
class PenaltyStationaryPoint:
    price: np.ndarray
    kind: str  # "min" or "max" of the summed penalty on the simplex
    multiplier: float


def _summed_marginal(penalties, i, q):
    try:
        return sum(pen.marginal(i, q) for pen in penalties)
    except OverflowError:
        return math.inf


def penalty_stationary_point(penalties) -> PenaltyStationaryPoint:
    """Interior point with ``sum_k alpha_k'(q_i) = nu`` for all ``i`` and ``sum q = 1``.

    Each summed marginal ``g_i`` is monotone in ``q``, so ``q_i(nu)`` is a
    root in ``log q`` and ``sum_i q_i(nu) - 1`` is a monotone root in ``nu``.
    Whether the point minimizes or maximizes the summed penalty follows from
    the sign of ``g_i'``.
    """
    pens = list(penalties)
    if not pens:
        raise DomainError("need at least one penalty")
    n = pens[0].belief.size
    probe = [(_summed_marginal(pens, i, 0.5 + 1e-6) - _summed_marginal(pens, i, 0.5 - 1e-6)) for i in range(n)]
    sign = np.sign(probe)
    if not (np.all(sign > 0) or np.all(sign < 0)):
        raise NumericalError("summed penalty marginals are not monotone in a common direction")
    increasing = sign[0] > 0
    LO, HI = -200.0, 0.0

    def q_of(i, nu):
        def h(s):
            return _summed_marginal(pens, i, math.exp(s)) - nu

        hlo, hhi = h(LO), h(HI)
        if increasing:
            if hlo >= 0:
                return math.exp(LO)
            if hhi <= 0:
                return 1.0
        else:
            if hlo <= 0:
                return math.exp(LO)
            if hhi >= 0:
                return 1.0
        return math.exp(brentq(h, LO, HI, xtol=1e-15, rtol=_RTOL, maxiter=500))

    def total(nu):
        return sum(q_of(i, nu) for i in range(n)) - 1.0

    # bracket nu between the summed marginals at q = 1/n (sum q = 1 there if symmetric)
    vals = [_summed_marginal(pens, i, 1.0 / n) for i in range(n)]
    lo, hi = min(vals), max(vals)
    if lo == hi:
        return PenaltyStationaryPoint(simplex(np.full(n, 1.0 / n)), "min" if increasing else "max", lo)
    flo, fhi = total(lo), total(hi)
    if np.sign(flo) == np.sign(fhi):
        raise NumericalError("no interior stationary point of the summed penalty")
    nu = brentq(total, lo, hi, xtol=1e-15, rtol=_RTOL, maxiter=500)
    q = np.array([q_of(i, nu) for i in range(n)])
    if np.any(q <= math.exp(LO)) or abs(q.sum() - 1.0) > 1e-9:
        raise NumericalError("no interior stationary point of the summed penalty")
    return PenaltyStationaryPoint(simplex(q / q.sum()), "min" if increasing else "max", float(nu))


def aggregate_penalty_price(penalties) -> np.ndarray:
    """Stationary point of ``sum_k alpha_k`` on the simplex.

    Closed forms are used when every penalty has the same family (and, for
    power penalties, the same gamma); mixed inputs use the nested root.
    """
    pens = list(penalties)
    if not pens:
        raise DomainError("need at least one penalty")
    if all(isinstance(p, RelativeEntropy) for p in pens):
        inv = np.array([1.0 / p.beta for p in pens])
        logs = np.array([np.log(p.belief) for p in pens])
        return _normalize_log(inv @ logs / inv.sum())
    if all(isinstance(p, LogPenalty) for p in pens):
        h = np.array([p.h for p in pens])
        return simplex(h @ np.array([p.belief for p in pens]) / h.sum())
    if all(isinstance(p, PowerPenalty) for p in pens) and len({p.gamma for p in pens}) == 1:
        return dual_power_mean_price(
            pens[0].belief, [p.belief for p in pens[1:]], [p.h for p in pens], pens[0].gamma
        )
    return penalty_stationary_point(pens).price


# --------------------------------------------------------------------------
# closed-form and approximate price formulas


def _normalize_log(logp) -> np.ndarray:
    logp = np.asarray(logp, dtype=float)
    return simplex(np.exp(logp - K.logsumexp(logp)))


def exp_limiting_price(theta, beta: float, beliefs, alphas) -> np.ndarray:
    """Geometric mean of beliefs weighted by risk tolerance (``1/beta``, ``1/alpha_j``)."""
    theta = simplex(theta)
    alphas = np.asarray(alphas, dtype=float)
    if beta <= 0 or np.any(alphas <= 0):
        raise DomainError("risk aversion parameters must be positive")
    tol = np.concatenate([[1.0 / beta], 1.0 / alphas])
    logs = np.vstack([np.log(theta)] + [np.log(simplex(b)) for b in beliefs])
    return _normalize_log(tol @ logs / tol.sum())


def exp_price_update(p, x_j, pi_j, alpha_j: float, beta: float) -> np.ndarray:
    """Price after one exponential trader, holding ``x_j`` before trading, best-responds."""
    p = simplex(p)
    x_j = np.asarray(x_j, dtype=float)
    # form 1 - w directly; 1 - alpha/(alpha + beta) cancels badly for large alpha
    w = alpha_j / (alpha_j + beta)
    v = beta / (alpha_j + beta)
    logp = w * np.log(p) + v * np.log(simplex(pi_j)) - (alpha_j * v) * x_j
    return _normalize_log(logp)


def _power_mean(theta, beliefs, h, inner: float, outer: float) -> np.ndarray:
    theta = simplex(theta)
    B = np.vstack([theta] + [simplex(b) for b in beliefs])
    h = np.asarray(h, dtype=float)
    if h.shape != (B.shape[0],) or np.any(h < 0) or not np.any(h > 0):
        raise DomainError("need one non-negative weight per belief, not all zero")
    # evaluate in logs: sum_k h_k b_k^inner, raised to outer
    with np.errstate(divide="ignore"):
        logs = np.log(h)[:, None] + inner * np.log(B)
    agg = np.array([K.logsumexp(np.ascontiguousarray(logs[:, i])) for i in range(B.shape[1])])
    return _normalize_log(outer * agg)


def power_mean_price(theta, beliefs, h, gamma: float) -> np.ndarray:
    """``p_i ∝ (h_0 theta_i^{1/(1-g)} + sum_j h_j pi_ij^{1/(1-g)})^{1-g}``."""
    if not gamma < 1:
        raise DomainError("gamma must be below 1")
    return _power_mean(theta, beliefs, h, 1.0 / (1.0 - gamma), 1.0 - gamma)


def dual_power_mean_price(theta, beliefs, h, gamma: float) -> np.ndarray:
    """``q_i ∝ (h_0 theta_i^{1-g} + sum_j h_j pi_ij^{1-g})^{1/(1-g)}``.

    This is the stationary point of summed power penalties on the simplex;
    it coincides with ``power_mean_price`` only at ``gamma = 0``.
    """
    if not gamma < 1:
        raise DomainError("gamma must be below 1")
    return _power_mean(theta, beliefs, h, 1.0 - gamma, 1.0 / (1.0 - gamma))


def crra_limiting_price(theta, beliefs, c_M: float, c, gamma: float) -> np.ndarray:
    return power_mean_price(theta, beliefs, np.concatenate([[c_M], np.asarray(c, dtype=float)]), gamma)


def fit_crra_weights(price, theta, beliefs, gamma: float):
    """Non-negative weights ``(c_M, c_1..c_J)`` summing to 1 that best reproduce ``price``.

    Least squares on log-price differences. A diagnostic only: the weights of
    a CRRA limit depend on the trading order and have no closed form.
    """
    target = np.log(simplex(price))
    m = 1 + len(beliefs)

    def resid(v):
        h = np.maximum(v, 0.0)
        if h.sum() <= 0:
            return np.full(target.size, 1e3)
        p = crra_limiting_price(theta, beliefs, h[0], h[1:], gamma)
        r = np.log(p) - target
        return r - r.mean()

    fit = least_squares(resid, np.full(m, 1.0 / m), bounds=(0.0, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    h = np.maximum(fit.x, 0.0)
    return h / h.sum()


def omega_dagger(a, b, w0, gamma: float) -> np.ndarray:
    """Heuristic Pareto weights ``(1/a_j) (a_j w_j0 / (1 - g) + b_j)^{1-g}``."""
    a, b, w0 = (np.asarray(v, dtype=float) for v in (a, b, w0))
    if np.any(a <= 0) or np.any(b < 0) or np.any(w0 <= 0) or not gamma < 1:
        raise DomainError("omega_dagger needs a > 0, b >= 0, w0 > 0 and gamma < 1")
    return (a * w0 / (1.0 - gamma) + b) ** (1.0 - gamma) / a


def risk_adjusted_wealth(w0, a, b, gamma: float):
    """``W + (1 - g) b / a``, the endowment entering the HARA price formula."""
    return np.asarray(w0, dtype=float) + (1.0 - gamma) * np.asarray(b, dtype=float) / np.asarray(a, dtype=float)


def hara_approx_price(theta, beliefs, w_hat0: float, w_hat, gamma: float) -> np.ndarray:
    """Wealth-weighted power mean of beliefs, market maker included, renormalized."""
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat0 <= 0 or np.any(w_hat <= 0):
        raise DomainError("risk-adjusted wealths must be positive")
    return power_mean_price(theta, beliefs, np.concatenate([[w_hat0], w_hat]), gamma)


def wealth_weighted_price(theta, beliefs, w_hat0: float, w_hat) -> np.ndarray:
    """The gamma = 0 baseline: wealth-weighted arithmetic mean of beliefs."""
    return hara_approx_price(theta, beliefs, w_hat0, w_hat, 0.0)


# --------------------------------------------------------------------------
# error metrics


def kld(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    if np.any(q[support] <= 0):
        raise DomainError("q must be positive wherever p is")
    return float(max(0.0, np.sum(p[support] * np.log(p[support] / q[support]))))


def delta_x(x_sim, x_dag) -> float:
    """``sum_j |x_sim_j - x_dag_j| / sum_j |x_sim_j|`` with Euclidean norms."""
    x_sim = np.asarray(x_sim, dtype=float)
    x_dag = np.asarray(x_dag, dtype=float)
    den = np.sum(np.linalg.norm(x_sim, axis=-1))
    if den == 0:
        raise DomainError("simulated allocation is zero")
    return float(np.sum(np.linalg.norm(x_sim - x_dag, axis=-1)) / den)
