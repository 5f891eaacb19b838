"""Utility-preserving market maker: order pricing, prices, cost function, scoring rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import simplex, wealth
from .errors import DomainError, NumericalError, UnsupportedError
from .utility import UtilitySpec

UTILITY_TOL = 1e-12
BINDING_TOL = 1e-10
_XTOL = 1e-15
_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class Quote:
    delta_w: float
    post_y: np.ndarray


def _lower_edge(U: UtilitySpec, base: np.ndarray) -> float:
    """Smallest cash shift ``w`` keeping ``base + w e`` in the domain (or -inf)."""
    bound = getattr(U, "lower_bound", -math.inf)
    if U.family == "composite_entropic_log" and U.eta > 0:
        bound = -U.B
    if bound == -math.inf:
        return -math.inf
    return float(np.max(bound - base))


def _solve_cash_shift(U: UtilitySpec, base: np.ndarray, target: float, scale: float) -> float:
    """Smallest ``w`` with U(base + w e) >= target; g(w) is increasing in w."""
    e = np.ones_like(base)
    edge = _lower_edge(U, base)

    def g(w):
        v = base + w * e
        if not U.domain_contains(v):
            return -math.inf
        return U.value(v) - target

    if edge < 0 and g(0.0) == 0:
        # already binding (e.g. a zero order at the binding state)
        return 0.0
    step = scale + 1.0
    if math.isfinite(edge):
        lo = edge + max(1.0, abs(edge)) * 1e-12
        glo = g(lo)
        if glo >= 0:
            # utility is finite at the domain edge and already high enough
            return lo
    else:
        lo = -step
        glo = g(lo)
        while glo > 0:
            step *= 2.0
            lo -= step
            glo = g(lo)
    hi = max(lo, 0.0) + step
    ghi = g(hi)
    while ghi < 0:
        lo, glo = hi, ghi
        step *= 2.0
        hi += step
        ghi = g(hi)
        if step > 1e300:
            raise NumericalError("cash shift is unbounded for this order")
    if glo == 0:
        return lo
    while math.isinf(glo):
        # pull the lower end off the domain edge
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm >= 0:
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    w = brentq(g, lo, hi, xtol=_XTOL, rtol=_RTOL, maxiter=500)
    res = g(w)
    if abs(res) > max(UTILITY_TOL, UTILITY_TOL * abs(target)) and not res > 0:
        raise NumericalError(f"cash shift residual {res:.3e} exceeds tolerance")
    return float(w)


def price_order(U: UtilitySpec, y, W0: float, dq) -> Quote:
    """Lowest charge for ``dq`` keeping U(y + dw e - dq) >= U(W0 e)."""
    y = wealth(y)
    dq = wealth(dq)
    if not U.domain_contains(y):
        raise DomainError(f"market maker position {y} is outside the utility domain")
    target = U.value(np.full_like(y, W0))
    base = y - dq
    dw = _solve_cash_shift(U, base, target, float(np.max(np.abs(dq))))
    return Quote(delta_w=dw, post_y=wealth(base + dw))


def instantaneous_price(U: UtilitySpec, y) -> np.ndarray:
    y = wealth(y)
    if not U.domain_contains(y):
        raise DomainError(f"price undefined at {y}: outside the utility domain")
    g = U.gradient(y)
    return simplex(g / g.sum())


def cost_function_value(U: UtilitySpec, W0: float, q) -> float:
    """C_U(q) = min{W : U(W e - q) >= U(W0 e)}."""
    q = wealth(q)
    target = U.value(np.full_like(q, W0))
    return W0 + _solve_cash_shift(U, W0 - q, target, float(np.max(np.abs(q))))


def induced_scoring_rule(U: UtilitySpec, W0: float, p) -> np.ndarray:
    """S(p) = -argmin{p.y : U(y) >= U(W0 e)}.

    Stationarity p = nu grad U(y) is inverted coordinate-wise, then ``nu`` is
    pinned by the binding constraint (increasing in ``log nu``).
    """
    if not U.separable:
        raise UnsupportedError("scoring rule needs a strictly concave separable utility")
    p = simplex(p)
    if np.any(p <= 0):
        raise DomainError("scoring rule is defined on the interior of the simplex")
    n = p.size
    target = U.value(np.full(n, W0))
    logp = np.log(p)

    def y_of(lnu):
        return np.array([U.inverse_marginal(i, math.exp(logp[i] - lnu)) for i in range(n)])

    def g(lnu):
        y = y_of(lnu)
        if not U.domain_contains(y):
            return -math.inf
        return U.value(y) - target

    lnu0 = float(np.mean(logp - U.log_gradient(np.full(n, W0))))
    lo, hi = lnu0 - 1.0, lnu0 + 1.0
    glo, ghi = g(lo), g(hi)
    step = 1.0
    while glo > 0:
        step *= 2
        lo -= step
        glo = g(lo)
    while ghi < 0:
        step *= 2
        hi += step
        ghi = g(hi)
    while not math.isfinite(glo):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm >= 0:
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    lnu = brentq(g, lo, hi, xtol=_XTOL, rtol=_RTOL, maxiter=500)
    return -y_of(lnu)
