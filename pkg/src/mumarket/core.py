"""Value types: probability vectors, net-wealth vectors and the market state.

Wealth is kept in net-wealth coordinates (cash plus per-outcome payoff), one
vector per agent. A trade moves ``z`` from the market maker to a trader, so
``y + sum_j x_j`` stays at ``w_all * e`` for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConservationError

SIMPLEX_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
CONSERVATION_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def simplex(entries, renormalize_tol: float = RENORMALIZE_TOL) -> np.ndarray:
    """Validate a probability vector and return it as a read-only array.

    Inputs whose sum is off by at most ``renormalize_tol`` are rescaled;
    larger deviations are rejected.
    """
    p = np.array(entries, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"probability vector needs at least 2 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"probability vector has negative or non-finite entries: {p}")
    total = p.sum()
    if abs(total - 1.0) > renormalize_tol:
        raise ValueError(f"probability vector sums to {total!r}, not 1")
    p = p / total
    assert abs(p.sum() - 1.0) <= SIMPLEX_TOL
    return _frozen(p)


def wealth(entries) -> np.ndarray:
    w = np.array(entries, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"wealth vector must be one-dimensional, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"wealth vector has non-finite entries: {w}")
    return _frozen(w)


trade_delta = wealth


@dataclass(frozen=True, eq=False)
class MarketState:
    """Net wealth of the market maker (``y``) and every trader (``x``) at round ``t``."""

    t: int
    y: np.ndarray
    x: tuple
    w_all: float
    W0: float
    w0: tuple = field(default=())

    @classmethod
    def initial(cls, W0: float, w0, n_outcomes: int) -> "MarketState":
        if W0 <= 0:
            raise ValueError("market maker initial wealth must be positive")
        w0 = tuple(float(v) for v in w0)
        if any(v <= 0 for v in w0):
            raise ValueError("trader initial wealth must be positive")
        if n_outcomes < 2:
            raise ValueError("need at least two outcomes")
        e = np.ones(n_outcomes)
        return cls(
            t=0,
            y=wealth(W0 * e),
            x=tuple(wealth(v * e) for v in w0),
            w_all=float(W0 + sum(w0)),
            W0=float(W0),
            w0=w0,
        )

    @property
    def n_outcomes(self) -> int:
        return self.y.shape[0]

    @property
    def n_traders(self) -> int:
        return len(self.x)

    def allocation(self) -> np.ndarray:
        """Trader positions stacked as a (J, I) array."""
        return np.vstack(self.x)


def total_wealth_residual(state: MarketState) -> float:
    total = state.y + np.sum(state.x, axis=0)
    return float(np.max(np.abs(total - state.w_all)))


def apply_trade(state: MarketState, trader: int, z) -> MarketState:
    if not 0 <= trader < state.n_traders:
        raise IndexError(f"trader index {trader} out of range for {state.n_traders} traders")
    z = np.asarray(z, dtype=float)
    if z.shape != state.y.shape or not np.all(np.isfinite(z)):
        raise ValueError(f"trade must be a finite vector of length {state.n_outcomes}")
    x = list(state.x)
    x[trader] = wealth(x[trader] + z)
    new = MarketState(
        t=state.t + 1,
        y=wealth(state.y - z),
        x=tuple(x),
        w_all=state.w_all,
        W0=state.W0,
        w0=state.w0,
    )
    residual = total_wealth_residual(new)
    if residual > CONSERVATION_TOL:
        raise ConservationError(f"total wealth residual {residual:.3e} after trade at t={state.t}")
    return new
