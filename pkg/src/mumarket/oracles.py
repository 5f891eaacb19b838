"""Independent reference computations used by the acceptance checks.

Nothing here shares code with the solvers it checks: the simplex optimizer
works from penalty values and gradients alone, and the finite-difference
price uses only ``price_order``.
"""

from __future__ import annotations

import numpy as np


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def simplex_optimize(f, grad, n: int, *, maximize: bool = False, floor: float = 1e-12,
                     tol: float = 1e-13, max_iter: int = 200_000, x0=None):
    """Projected gradient with Barzilai-Borwein steps and a nonmonotone safeguard.

    Iterates are kept at least ``floor`` away from the boundary so penalties
    with logarithmic or power singularities stay finite. Stops when the
    projected step is below ``tol``. Returns ``(q, objective, iterations)``.
    """
    sgn = -1.0 if maximize else 1.0

    def F(q):
        return sgn * f(q)

    def G(q):
        return sgn * np.asarray(grad(q), dtype=float)

    def proj(v):
        # project onto {q >= floor, sum q = 1}
        return floor + project_simplex((v - floor) / (1.0 - n * floor)) * (1.0 - n * floor)

    q = np.full(n, 1.0 / n) if x0 is None else proj(np.asarray(x0, dtype=float))
    fq, gq = F(q), G(q)
    step = 1e-2
    it = 0
    for it in range(1, max_iter + 1):
        t = step
        while True:
            cand = proj(q - t * gq)
            fc = F(cand)
            if fc <= fq - 1e-4 * np.dot(gq, q - cand) or t < 1e-30:
                break
            t *= 0.5
        s = cand - q
        if np.max(np.abs(s)) <= tol:
            q, fq = cand, fc
            break
        gc = G(cand)
        y = gc - gq
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 10.0 * t
        step = min(max(step, 1e-12), 1e6)
        q, fq, gq = cand, fc, gc
    return q, sgn * fq, it


def summed_penalty(penalties):
    """Objective and gradient of ``sum_k alpha_k`` built from the penalty objects."""
    pens = list(penalties)
    n = pens[0].belief.size

    def f(q):
        return sum(p.value(q) for p in pens)

    def g(q):
        return np.array([sum(p.marginal(i, q[i]) for p in pens) for i in range(n)])

    return f, g


def fd_price(price_order_fn, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the order charge along each unit order, normalized."""
    n = price_order_fn.n
    d = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        d[i] = (price_order_fn(e) - price_order_fn(-e)) / (2 * eps)
    return d / d.sum()
