"""Trading Process: traders take turns best-responding against the market maker.

A run starts every agent at a riskless position, then lets the trader picked
by the sequence submit its utility-maximizing order. The market maker prices
each order so its own utility stays at the initial level. The run stops when
a whole sweep of traders leaves the market unchanged.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import MarketState, apply_trade, total_wealth_residual
from .errors import MarketError
from .pricing import instantaneous_price
from .rng import SplitMix64
from .trader import best_response
from .utility import RiskMeasure, UtilitySpec

DEFAULT_TRADE_EPS = 1e-10
DEFAULT_MAX_ROUNDS = 100_000
RANDOM_WINDOW_FACTOR = 20


@dataclass(frozen=True)
class RoundRobin:
    """Fixed cyclic order; ``order`` lists trader numbers starting at 1."""

    order: tuple
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def __post_init__(self):
        order = tuple(int(j) for j in self.order)
        if sorted(order) != list(range(1, len(order) + 1)):
            raise ValueError(f"round-robin order must be a permutation of 1..J, got {order}")
        if self.max_rounds <= 0:
            raise ValueError("max_rounds must be positive")
        object.__setattr__(self, "order", order)

    kind = "round_robin"

    def to_dict(self):
        return {"kind": self.kind, "order": list(self.order), "max_rounds": self.max_rounds}


@dataclass(frozen=True)
class Random:
    """Each arrival is a uniform draw over traders from a seeded SplitMix64 stream."""

    seed: int
    max_rounds: int = DEFAULT_MAX_ROUNDS

    kind = "random"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.max_rounds <= 0:
            raise ValueError("max_rounds must be positive")

    def to_dict(self):
        return {"kind": self.kind, "seed": int(self.seed), "max_rounds": self.max_rounds}


TradingSequence = RoundRobin | Random


def sequence_from_dict(d, n_traders: int | None = None) -> TradingSequence:
    kind = d.get("kind")
    max_rounds = int(d.get("max_rounds", DEFAULT_MAX_ROUNDS))
    if kind == "round_robin":
        order = d.get("order")
        if order is None:
            if n_traders is None:
                raise ValueError("round_robin sequence needs an explicit order")
            order = range(1, n_traders + 1)
        return RoundRobin(tuple(order), max_rounds)
    if kind == "random":
        return Random(int(d["seed"]), max_rounds)
    raise ValueError(f"unknown sequence kind {kind!r}; expected 'round_robin' or 'random'")


def identity_order(n_traders: int, max_rounds: int = DEFAULT_MAX_ROUNDS) -> RoundRobin:
    return RoundRobin(tuple(range(1, n_traders + 1)), max_rounds)


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: int
    trader: int  # 0-based
    z: np.ndarray
    price: np.ndarray
    trader_utilities: np.ndarray
    market_utility: float


@dataclass(eq=False)
class Trajectory:
    snapshots: list
    final_state: MarketState
    converged: bool
    rounds_used: int
    market_maker: UtilitySpec | None = None
    traders: tuple = field(default=())
    initial_market_utility: float = float("nan")

    @property
    def final_price(self) -> np.ndarray:
        if self.snapshots:
            return self.snapshots[-1].price
        return instantaneous_price(self.market_maker, self.final_state.y)


def _check_config(config):
    U = config.market_maker.utility
    n = config.securities
    for k, spec in enumerate([U] + [t.utility for t in config.traders]):
        if spec.n_outcomes != n:
            who = "market maker" if k == 0 else f"trader {k}"
            raise ValueError(f"{who} utility has {spec.n_outcomes} outcomes, config declares {n}")
    if isinstance(config.sequence, RoundRobin) and len(config.sequence.order) != len(config.traders):
        raise ValueError("round-robin order length differs from the number of traders")


class _Stopper:
    """Tracks the artifact's stopping rule for both sequence kinds."""

    def __init__(self, n_traders: int, window: int | None):
        self.n = n_traders
        self.window = window
        self.streak = 0
        self.seen: set = set()

    def update(self, trader: int, small: bool) -> bool:
        if not small:
            self.streak = 0
            self.seen.clear()
            return False
        self.streak += 1
        self.seen.add(trader)
        need = self.n if self.window is None else self.window
        return self.streak >= need and len(self.seen) == self.n


def run(config, *, trade_eps: float | None = None, max_rounds: int | None = None) -> Trajectory:
    """Iterate best responses along ``config.sequence`` until a quiet sweep.

    RoundRobin stops after one full period in which every step has
    ``max|z| <= trade_eps``; Random stops after ``20 J`` consecutive small
    draws that cover every trader. A round is ``J`` arrivals for both kinds.
    """
    _check_config(config)
    U = config.market_maker.utility
    W0 = config.market_maker.W0
    Vs = tuple(t.utility for t in config.traders)
    J = len(Vs)
    eps = config.tolerances.trade_eps if trade_eps is None else trade_eps
    seq = config.sequence
    rounds = seq.max_rounds if max_rounds is None else max_rounds

    state = MarketState.initial(W0, [t.w0 for t in config.traders], config.securities)
    v_now = np.array([V.value(x) for V, x in zip(Vs, state.x)])
    u0 = U.value(state.y)

    if isinstance(seq, RoundRobin):
        order = [j - 1 for j in seq.order]
        arrivals = (order[k % J] for k in range(rounds * J))
        stopper = _Stopper(J, None)
    else:
        rng = SplitMix64(seq.seed)
        arrivals = (rng.below(J) for _ in range(rounds * J))
        stopper = _Stopper(J, RANDOM_WINDOW_FACTOR * J)

    snapshots = []
    converged = False
    steps = 0
    for j in arrivals:
        t = state.t
        try:
            br = best_response(Vs[j], U, state.x[j], state.y, W0)
            state = apply_trade(state, j, br.z)
            price = instantaneous_price(U, state.y)
            v_now[j] = Vs[j].value(state.x[j])
            u_now = U.value(state.y)
        except MarketError as exc:
            raise type(exc)(f"t={t}, trader={j + 1}: {exc}") from exc
        snapshots.append(Snapshot(state.t, j, br.z, price, v_now.copy(), u_now))
        steps += 1
        if stopper.update(j, float(np.max(np.abs(br.z))) <= eps):
            converged = True
            break

    rounds_used = -(-steps // J)
    return Trajectory(snapshots, state, converged, rounds_used, U, Vs, u0)


# --------------------------------------------------------------------------
# post-run diagnostics


@dataclass(frozen=True)
class ConvergenceReport:
    kkt_residuals: np.ndarray
    omega: np.ndarray
    log_zeta: np.ndarray
    max_residual: float
    conservation_residual: float
    market_utility_drift: float


def convergence_report(traj: Trajectory) -> ConvergenceReport:
    """Stationarity of every trader against the market maker at the final state.

    At a Pareto optimum each trader's marginal utilities are proportional to
    the market maker's: ``grad V_j(x_j) = zeta_j grad U(y)``. The common
    multiplier vector is ``grad U(y)`` (so ``lambda = 1``) and the recovered
    Pareto weights are ``omega_j = 1 / zeta_j``.
    """
    U = traj.market_maker
    st = traj.final_state
    J = st.n_traders
    resid = np.empty(J)
    lz = np.empty(J)
    if isinstance(U, RiskMeasure):
        qu = U.gradient(st.y)
        for j, V in enumerate(traj.traders):
            resid[j] = float(np.max(np.abs(V.gradient(st.x[j]) - qu)))
            lz[j] = 0.0
    else:
        lgu = U.log_gradient(st.y)
        for j, V in enumerate(traj.traders):
            d = V.log_gradient(st.x[j]) - lgu
            lz[j] = float(np.mean(d))
            resid[j] = float(np.max(np.abs(np.expm1(d - lz[j]))))
    drift = abs(U.value(st.y) - U.value(np.full(st.n_outcomes, st.W0)))
    return ConvergenceReport(
        kkt_residuals=resid,
        omega=np.exp(-lz),
        log_zeta=lz,
        max_residual=float(resid.max()) if J else 0.0,
        conservation_residual=total_wealth_residual(st),
        market_utility_drift=drift,
    )


# --------------------------------------------------------------------------
# serialization


def _header(n_outcomes: int, n_traders: int) -> list:
    return (
        ["t", "trader"]
        + [f"z_{i}" for i in range(1, n_outcomes + 1)]
        + [f"p_{i}" for i in range(1, n_outcomes + 1)]
        + [f"V_{j}" for j in range(1, n_traders + 1)]
        + ["U"]
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_rows(traj: Trajectory):
    for s in traj.snapshots:
        yield (
            [str(s.t), str(s.trader + 1)]
            + [_fmt(v) for v in s.z]
            + [_fmt(v) for v in s.price]
            + [_fmt(v) for v in s.trader_utilities]
            + [_fmt(s.market_utility)]
        )


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(traj.final_state.n_outcomes, traj.final_state.n_traders))
    w.writerows(trajectory_rows(traj))
    return buf.getvalue()


def trajectory_json(traj: Trajectory) -> str:
    st = traj.final_state
    doc = {
        "columns": _header(st.n_outcomes, st.n_traders),
        "rows": [
            {
                "t": s.t,
                "trader": s.trader + 1,
                "z": [float(v) for v in s.z],
                "p": [float(v) for v in s.price],
                "V": [float(v) for v in s.trader_utilities],
                "U": float(s.market_utility),
            }
            for s in traj.snapshots
        ],
        "converged": traj.converged,
        "rounds_used": traj.rounds_used,
        "final": {
            "y": [float(v) for v in st.y],
            "x": [[float(v) for v in xj] for xj in st.x],
            "price": [float(v) for v in traj.final_price],
        },
    }
    return json.dumps(doc, indent=1) + "\n"
