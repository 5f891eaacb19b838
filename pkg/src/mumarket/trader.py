"""Myopic trader best response against a utility-preserving market maker."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import trade_delta, wealth
from .errors import DomainError, NumericalError, UnsupportedError
from .utility import Exponential, RiskMeasure, UtilitySpec

KKT_TOL = 1e-8
DEGENERATE_TOL = 1e-12
LOG_ZETA_BRACKET = (-30.0, 30.0)
DESCENT_MAXITER = 10_000


@dataclass(frozen=True)
class BestResponse:
    z: np.ndarray
    trader_utility_gain: float
    kkt_residual: float
    log_zeta: float = 0.0


def utility_gain(V: UtilitySpec, x, z) -> float:
    x = wealth(x)
    return V.value(x + np.asarray(z, dtype=float)) - V.value(x)


def _kkt_at(V, U, x, y):
    """Multiplier estimate and relative stationarity residual at (x, y)."""
    d = V.log_gradient(x) - U.log_gradient(y)
    lzeta = float(np.mean(d))
    return lzeta, float(np.max(np.abs(np.expm1(d - lzeta))))


def _exponential(V: Exponential, U: Exponential, x, y, u0):
    # closed form from the KKT system: z_i = ln(pi_hat_i / (zeta theta_hat_i)) / (alpha + beta)
    alpha, beta = V.beta, U.beta
    lpi_hat = np.log(V.belief) - alpha * x
    ltheta_hat = np.log(U.belief) - beta * y
    s = alpha + beta
    lS = K.logsumexp(ltheta_hat * (alpha / s) + lpi_hat * (beta / s))
    lC = math.log(-beta * u0)
    lzeta = s / beta * (lS - lC)
    z = (lpi_hat - lzeta - ltheta_hat) / s
    return z, lzeta


def _separable(V, U, x, y, u0):
    kv, pv, wv = V.kernel_params
    ku, pu, wu = U.kernel_params
    z = np.empty_like(x)
    lzeta, status = K.best_response(kv, pv, wv, ku, pu, wu, x, y, u0, *LOG_ZETA_BRACKET, z)
    if status != 0:
        raise NumericalError(
            f"best response root search failed (status {status}) at x={x.tolist()}, y={y.tolist()}"
        )
    return z, lzeta


def _risk_measures(V: RiskMeasure, U: RiskMeasure, x, y, u0):
    """Relative-entropy risk measures are entropic certainty equivalents.

    ``-rho(w) = -(1/beta) ln sum_i pi_i exp(-beta w_i)`` is an increasing
    transform of exponential utility with the same belief and ``beta``, so
    the step solves the exponential problem with the constraint level mapped.
    """
    Ve = Exponential(V.belief, V.penalty.beta)
    Ue = Exponential(U.belief, U.penalty.beta)
    beta = U.penalty.beta
    z, _ = _exponential(Ve, Ue, x, y, -math.exp(-beta * u0) / beta)
    return z, 0.0


def risk_measure_descent(V: RiskMeasure, U: RiskMeasure, x, y, W0: float, tol: float = 1e-8):
    """Reference solver: minimize rho_V(x + z) + rho_U(y - z) over sum(z) = 0.

    Gradient descent with Barzilai-Borwein steps and Armijo backtracking,
    then a riskless shift restores ``U(y - z) = U(W0 e)``. It relies only on
    the dual evaluation of the risk measures, so it serves as an independent
    check of the closed-form step.
    """
    x = wealth(x)
    y = wealth(y)
    u0 = U.value(np.full_like(y, W0))

    def h(z):
        return V.risk(x + z) + U.risk(y - z)

    def grad(z):
        g = U.gradient(y - z) - V.gradient(x + z)
        return g - g.mean()

    z = np.zeros_like(x)
    f = h(z)
    g = grad(z)
    step = 1.0 / (V.penalty.beta + U.penalty.beta)
    for _ in range(DESCENT_MAXITER):
        if np.max(np.abs(g)) <= tol:
            break
        t = step
        while True:
            z_new = z - t * g
            f_new = h(z_new)
            if f_new <= f - 1e-4 * t * (g @ g) or t < 1e-20:
                break
            t *= 0.5
        g_new = grad(z_new)
        dz, dg = z_new - z, g_new - g
        curv = dz @ dg
        # Barzilai-Borwein step as the next trial length
        step = (dz @ dz) / curv if curv > 0 else 2.0 * t
        z, f, g = z_new, f_new, g_new
        if t < 1e-20:
            break
    z = z + (U.value(y - z) - u0)
    return z


def best_response(V: UtilitySpec, U: UtilitySpec, x, y, W0: float) -> BestResponse:
    """Unique maximizer of V(x + z) subject to U(y - z) >= U(W0 e)."""
    x = wealth(x)
    y = wealth(y)
    if not V.domain_contains(x):
        raise DomainError(f"trader position {x} is outside the trader utility domain")
    if not U.domain_contains(y):
        raise DomainError(f"market maker position {y} is outside the market maker domain")
    u0 = U.value(np.full_like(y, W0))
    v_before = V.value(x)

    if V.separable and U.separable:
        lzeta, resid = _kkt_at(V, U, x, y)
        if resid <= DEGENERATE_TOL and abs(U.value(y) - u0) <= DEGENERATE_TOL:
            return BestResponse(trade_delta(np.zeros_like(x)), 0.0, resid, lzeta)
        if isinstance(V, Exponential) and isinstance(U, Exponential):
            z, lzeta = _exponential(V, U, x, y, u0)
        else:
            z, lzeta = _separable(V, U, x, y, u0)
        kv, pv, wv = V.kernel_params
        ku, pu, wu = U.kernel_params
        kkt = K.stationarity_residual(kv, pv, wv, ku, pu, wu, x + z, y - z, lzeta)
    elif isinstance(V, RiskMeasure) and isinstance(U, RiskMeasure):
        qv, qu = V.gradient(x), U.gradient(y)
        if np.max(np.abs(qv - qu)) <= DEGENERATE_TOL and abs(U.value(y) - u0) <= DEGENERATE_TOL:
            return BestResponse(trade_delta(np.zeros_like(x)), 0.0, 0.0, 0.0)
        z, lzeta = _risk_measures(V, U, x, y, u0)
        kkt = float(np.max(np.abs(V.gradient(x + z) - U.gradient(y - z))))
    else:
        raise UnsupportedError(f"no best-response solver for a {V.family} trader against a {U.family} market maker")

    gain = V.value(x + z) - v_before
    if gain < -1e-12:
        raise NumericalError(f"best response lowers trader utility by {-gain:.3e}")
    return BestResponse(trade_delta(z), float(gain), float(kkt), float(lzeta))
