"""
Scalar kernels for separable expected-utility agents.

Every nested solve in the package (trader best response, Pareto allocation,
entropic dual multiplier) reduces to monotone scalar roots of sums of
inverse marginal utilities. Those loops dominate simulation time, so they
are compiled with numba when available. Set ``MUMARKET_JIT=0`` to run the
same code as plain Python/numpy (useful for debugging and for the
benchmark in ``benchmarks/bench_kernels.py``).

Agents are encoded as ``(kind, a, b, g)`` plus a per-outcome weight:

    EXPONENTIAL  u'(w) = wt * exp(-a w)                    (a = risk aversion)
    HARA         u'(w) = wt * a * (a w / (1 - g) + b)**(g - 1)
    CRRA         u'(w) = wt * g * w**(g - 1)

HARA with ``g == 0`` is the logarithmic member ``wt * ln(a w + b)``.
"""

import math
import os

import numpy as np

_FLAG = os.environ.get("MUMARKET_JIT", "1").strip().lower()
JIT_ENABLED = _FLAG not in ("0", "false", "no", "off")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if JIT_ENABLED:

    def jit(fn):
        # no on-disk cache: kernels taking functions as arguments cannot be cached
        return njit(fn)

else:

    def jit(fn):
        return fn


EXPONENTIAL = 0
HARA = 1
CRRA = 2

XTOL = 1e-15
RTOL = 4.0 * np.finfo(float).eps
MAXITER = 200


# --------------------------------------------------------------------------
# per-coordinate primitives


@jit
def lower_bound(kind, a, b, g):
    if kind == EXPONENTIAL:
        return -np.inf
    if kind == HARA:
        return -b * (1.0 - g) / a
    return 0.0


@jit
def log_marginal(kind, a, b, g, wt, w):
    if kind == EXPONENTIAL:
        return math.log(wt) - a * w
    if kind == HARA:
        s = a * w / (1.0 - g) + b
        if s <= 0.0:
            return np.inf
        return math.log(wt) + math.log(a) + (g - 1.0) * math.log(s)
    if w <= 0.0:
        return np.inf
    return math.log(wt) + math.log(g) + (g - 1.0) * math.log(w)


@jit
def inverse_marginal_log(kind, a, b, g, wt, lm):
    """Wealth at which the marginal utility equals ``exp(lm)``."""
    if kind == EXPONENTIAL:
        return (math.log(wt) - lm) / a
    if kind == HARA:
        e = (lm - math.log(wt) - math.log(a)) / (g - 1.0)
        if e > 700.0:
            return np.inf
        return (math.exp(e) - b) * (1.0 - g) / a
    e = (lm - math.log(wt) - math.log(g)) / (g - 1.0)
    if e > 700.0:
        return np.inf
    return math.exp(e)


@jit
def coord_utility(kind, a, b, g, w):
    if kind == EXPONENTIAL:
        return -math.exp(-a * w) / a
    if kind == HARA:
        s = a * w / (1.0 - g) + b
        if s <= 0.0:
            return -np.inf
        if g == 0.0:
            return math.log(s)
        return (1.0 - g) / g * s**g
    if w <= 0.0:
        return -np.inf
    return w**g


@jit
def utility(kind, a, b, g, wts, w):
    acc = 0.0
    for i in range(w.shape[0]):
        acc += wts[i] * coord_utility(kind, a, b, g, w[i])
    return acc


@jit
def logsumexp(v):
    m = -np.inf
    for i in range(v.shape[0]):
        if v[i] > m:
            m = v[i]
    if not math.isfinite(m):
        return m
    acc = 0.0
    for i in range(v.shape[0]):
        acc += math.exp(v[i] - m)
    return m + math.log(acc)


# --------------------------------------------------------------------------
# bracketed root search


@jit
def brentq(f, xa, xb, fa, fb, args, xtol, rtol, maxiter):
    """Brent's method on a sign-changing bracket (scipy ``brentq`` logic)."""
    xpre = xa
    xcur = xb
    fpre = fa
    fcur = fb
    xblk = 0.0
    fblk = 0.0
    spre = 0.0
    scur = 0.0
    if fpre == 0.0:
        return xpre
    if fcur == 0.0:
        return xcur
    for _ in range(maxiter):
        if fpre * fcur < 0.0:
            xblk = xpre
            fblk = fpre
            spre = xcur - xpre
            scur = spre
        if abs(fblk) < abs(fcur):
            xpre = xcur
            xcur = xblk
            xblk = xpre
            fpre = fcur
            fcur = fblk
            fblk = fpre
        delta = (xtol + rtol * abs(xcur)) / 2.0
        sbis = (xblk - xcur) / 2.0
        if fcur == 0.0 or abs(sbis) < delta:
            return xcur
        if abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre = scur
                scur = stry
            else:
                spre = sbis
                scur = sbis
        else:
            spre = sbis
            scur = sbis
        xpre = xcur
        fpre = fcur
        if abs(scur) > delta:
            xcur += scur
        elif sbis > 0.0:
            xcur += delta
        else:
            xcur -= delta
        fcur = f(xcur, args)
    return xcur


@jit
def solve_increasing(f, x0, step, args):
    """Root of an increasing ``f`` by geometric bracket expansion from ``x0``.

    Returns ``(root, ok)``; ``ok`` is False when no sign change was found.
    """
    f0 = f(x0, args)
    if f0 == 0.0:
        return x0, True
    lo = x0
    hi = x0
    flo = f0
    fhi = f0
    ok = False
    for _ in range(80):
        if f0 < 0.0:
            lo = hi
            flo = fhi
            hi = lo + step
            fhi = f(hi, args)
            if fhi >= 0.0:
                ok = True
                break
        else:
            hi = lo
            fhi = flo
            lo = hi - step
            flo = f(lo, args)
            if flo <= 0.0:
                ok = True
                break
        step *= 2.0
    if not ok:
        return x0, False
    return brentq(f, lo, hi, flo, fhi, args, XTOL, RTOL, MAXITER), True


# --------------------------------------------------------------------------
# trader best response against the market maker


@jit
def _br_coord_residual(s, args):
    kv, av, bv, gv, wv, ku, au, bu, gu, wu, lzeta, total = args
    return total - (
        inverse_marginal_log(kv, av, bv, gv, wv, s)
        + inverse_marginal_log(ku, au, bu, gu, wu, s - lzeta)
    )


@jit
def _br_fill_z(lzeta, kv, pv, wv, ku, pu, wu, x, y, s_guess, z):
    ok = True
    for i in range(x.shape[0]):
        args = (kv, pv[0], pv[1], pv[2], wv[i], ku, pu[0], pu[1], pu[2], wu[i], lzeta, x[i] + y[i])
        s, found = solve_increasing(_br_coord_residual, s_guess[i], 1.0, args)
        ok = ok and found
        s_guess[i] = s
        z[i] = inverse_marginal_log(kv, pv[0], pv[1], pv[2], wv[i], s) - x[i]
    return ok


@jit
def _br_outer_residual(lzeta, args):
    kv, pv, wv, ku, pu, wu, x, y, u0, s_guess, z, ybuf = args
    _br_fill_z(lzeta, kv, pv, wv, ku, pu, wu, x, y, s_guess, z)
    for i in range(y.shape[0]):
        ybuf[i] = y[i] - z[i]
    return utility(ku, pu[0], pu[1], pu[2], wu, ybuf) - u0


@jit
def best_response(kv, pv, wv, ku, pu, wu, x, y, u0, lzeta_lo, lzeta_hi, z):
    """Trader step maximizing V(x + z) subject to U(y - z) = u0.

    Writes the step into ``z`` and returns ``(log_zeta, status)`` where
    status 0 is success, 1 an inner bracket failure and 2 an outer one.
    """
    n = x.shape[0]
    s_guess = np.empty(n)
    for i in range(n):
        s_guess[i] = log_marginal(kv, pv[0], pv[1], pv[2], wv[i], x[i])
    ybuf = np.empty(n)
    args = (kv, pv, wv, ku, pu, wu, x, y, u0, s_guess, z, ybuf)
    flo = _br_outer_residual(lzeta_lo, args)
    fhi = _br_outer_residual(lzeta_hi, args)
    for _ in range(40):
        if flo <= 0.0:
            break
        lzeta_lo -= 2.0 * (lzeta_hi - lzeta_lo)
        flo = _br_outer_residual(lzeta_lo, args)
    for _ in range(40):
        if fhi >= 0.0:
            break
        lzeta_hi += 2.0 * (lzeta_hi - lzeta_lo)
        fhi = _br_outer_residual(lzeta_hi, args)
    if flo > 0.0 or fhi < 0.0:
        return 0.0, 2
    lzeta = brentq(_br_outer_residual, lzeta_lo, lzeta_hi, flo, fhi, args, XTOL, RTOL, MAXITER)
    ok = _br_fill_z(lzeta, kv, pv, wv, ku, pu, wu, x, y, s_guess, z)
    return lzeta, 0 if ok else 1


@jit
def stationarity_residual(kv, pv, wv, ku, pu, wu, xn, yn, lzeta):
    """Max relative violation of ``grad V(xn) = zeta * grad U(yn)``."""
    worst = 0.0
    for i in range(xn.shape[0]):
        d = log_marginal(kv, pv[0], pv[1], pv[2], wv[i], xn[i]) - lzeta
        d -= log_marginal(ku, pu[0], pu[1], pu[2], wu[i], yn[i])
        r = abs(math.expm1(d))
        if not r <= worst:
            worst = r
    return worst


# --------------------------------------------------------------------------
# weighted Pareto allocation


@jit
def _po_coord_residual(s, args):
    kinds, prm, wrow, shift, total = args
    acc = 0.0
    for k in range(kinds.shape[0]):
        acc += inverse_marginal_log(kinds[k], prm[k, 0], prm[k, 1], prm[k, 2], wrow[k], s - shift[k])
    return total - acc


@jit
def _po_fill(kinds, prm, wts_t, shift, total, s_guess, alloc):
    ok = True
    n_out = wts_t.shape[0]
    for i in range(n_out):
        args = (kinds, prm, wts_t[i], shift, total)
        s, found = solve_increasing(_po_coord_residual, s_guess[i], 1.0, args)
        ok = ok and found
        s_guess[i] = s
        for k in range(kinds.shape[0]):
            alloc[k, i] = inverse_marginal_log(
                kinds[k], prm[k, 0], prm[k, 1], prm[k, 2], wts_t[i, k], s - shift[k]
            )
    return ok


@jit
def _po_outer_residual(llam, args):
    kinds, prm, wts_t, shift, total, u0, s_guess, alloc = args
    m = kinds.shape[0] - 1
    shift[m] = llam
    _po_fill(kinds, prm, wts_t, shift, total, s_guess, alloc)
    return utility(kinds[m], prm[m, 0], prm[m, 1], prm[m, 2], wts_t[:, m], alloc[m]) - u0


@jit
def pareto(kinds, prm, wts_t, log_omega, total, u0, alloc, s_guess):
    """Maximize sum_j omega_j V_j(x_j) s.t. clearing and U(y) = u0.

    The market maker is the last agent. ``wts_t`` is (I, J + 1). Fills
    ``alloc`` (J + 1, I) and ``s_guess`` (log multipliers mu_i), returns
    ``(log_lambda, status)``.
    """
    m = kinds.shape[0] - 1
    shift = np.empty(m + 1)
    for j in range(m):
        shift[j] = log_omega[j]
    args = (kinds, prm, wts_t, shift, total, u0, s_guess, alloc)
    llam, found = solve_increasing(_po_outer_residual, 0.0, 1.0, args)
    if not found:
        return 0.0, 2
    shift[m] = llam
    ok = _po_fill(kinds, prm, wts_t, shift, total, s_guess, alloc)
    return llam, 0 if ok else 1


# --------------------------------------------------------------------------
# relative-entropy penalty: dual multiplier of the risk measure


@jit
def _entropic_residual(lam, args):
    lpi, beta, w = args
    acc = 0.0
    for i in range(w.shape[0]):
        acc += math.exp(lpi[i] + beta * (lam - w[i]) - 1.0)
    return acc - 1.0


@jit
def entropic_dual(lpi, beta, w, eps):
    """Solve sum_i f_i^{-1}(lam - w_i) = 1 for the relative-entropy penalty.

    f_i(q) = (ln(q / pi_i) + 1) / beta; the bracket is
    [min_i(w_i + f_i(eps)), max_i(w_i + f_i(1))].
    Returns ``(lam, q, residual)``.
    """
    n = w.shape[0]
    lo = np.inf
    hi = -np.inf
    leps = math.log(eps)
    for i in range(n):
        lo = min(lo, w[i] + (leps - lpi[i] + 1.0) / beta)
        hi = max(hi, w[i] + (1.0 - lpi[i]) / beta)
    args = (lpi, beta, w)
    flo = _entropic_residual(lo, args)
    fhi = _entropic_residual(hi, args)
    lam = brentq(_entropic_residual, lo, hi, flo, fhi, args, XTOL, RTOL, MAXITER)
    q = np.empty(n)
    for i in range(n):
        q[i] = math.exp(lpi[i] + beta * (lam - w[i]) - 1.0)
    return lam, q, _entropic_residual(lam, args)
