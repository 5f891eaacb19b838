"""Desk-scale reproductions: the two-trader HARA example, the omega-dagger
verification batches and the price-formula comparison across gamma.

Batches fan out over processes (``MUMARKET_THREADS`` caps the count; the
default is the CPU count) and are merged by input index, so output does not
depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import MarketConfig, MarketMakerConfig, RandomMarketSpec, TraderConfig, generate_market
from .engine import RoundRobin, convergence_report, run
from .equilibrium import (
    delta_x,
    hara_approx_price,
    kld,
    omega_dagger,
    risk_adjusted_wealth,
    solve_pareto,
    wealth_weighted_price,
)
from .rng import SplitMix64
from .utility import Hara


def worker_count() -> int:
    raw = os.environ.get("MUMARKET_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def parallel_map(fn, items) -> list:
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # executor.map yields in submission order
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".10g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# two-trader HARA example


TABLE2_BELIEFS = ((0.2, 0.2, 0.6), (0.6, 0.1, 0.3))
THETA_CANDIDATES = ((1 / 3, 1 / 3, 1 / 3), (0.5, 0.25, 0.25), (0.4, 0.4, 0.2), (0.25, 0.5, 0.25))
# (W1, W2, gamma, sequence) -> (p1, p2, p3, V1, V2) as published
TABLE2_PUBLISHED = {
    (10.0, 10.0, 0.5, "S1"): (0.401, 0.189, 0.410, 4.977, 5.144),
    (10.0, 10.0, 0.5, "S2"): (0.401, 0.189, 0.410, 4.975, 5.146),
    (8.0, 12.0, 0.5, "S1"): (0.260, 0.202, 0.538, 5.147, 5.898),
    (8.0, 12.0, 0.5, "S2"): (0.263, 0.205, 0.533, 5.187, 5.864),
    (10.0, 10.0, 0.7, "S1"): (0.443, 0.167, 0.391, 5.908, 6.345),
    (10.0, 10.0, 0.7, "S2"): (0.442, 0.167, 0.391, 5.922, 6.333),
    (8.0, 12.0, 0.7, "S1"): (0.534, 0.142, 0.324, 5.440, 6.777),
    (8.0, 12.0, 0.7, "S2"): (0.532, 0.142, 0.326, 5.526, 6.706),
}
SEQUENCES = {"S1": (1, 2), "S2": (2, 1)}


def table2_config(theta, W1: float, W2: float, gamma: float, seq: str) -> MarketConfig:
    mm = MarketMakerConfig(Hara(theta, 1.0, 0.8, gamma), 1.0)
    traders = tuple(
        TraderConfig(Hara(pi, 1.0, 0.0, gamma), w) for pi, w in zip(TABLE2_BELIEFS, (W1, W2))
    )
    return MarketConfig(3, mm, traders, RoundRobin(SEQUENCES[seq]))


@dataclass(frozen=True)
class Table2Row:
    theta: tuple
    W1: float
    W2: float
    gamma: float
    sequence: str
    price: tuple
    utilities: tuple
    published: tuple
    converged: bool

    @property
    def price_error(self) -> float:
        return float(np.max(np.abs(np.array(self.price) - self.published[:3])))


def _table2_task(key):
    theta, W1, W2, gamma, seq = key
    traj = run(table2_config(theta, W1, W2, gamma, seq))
    st = traj.final_state
    V = tuple(float(t.value(x)) for t, x in zip(traj.traders, st.x))
    return Table2Row(theta, W1, W2, gamma, seq, tuple(traj.final_price.tolist()), V,
                     TABLE2_PUBLISHED[(W1, W2, gamma, seq)], traj.converged)


def table2(thetas=THETA_CANDIDATES) -> list:
    keys = [(tuple(th),) + k for th in thetas for k in TABLE2_PUBLISHED]
    return parallel_map(_table2_task, keys)


def table2_best_theta(rows) -> tuple:
    """Candidate belief with the smallest mean price error over all rows."""
    by = {}
    for r in rows:
        by.setdefault(r.theta, []).append(r.price_error)
    return min(by, key=lambda th: float(np.mean(by[th])))


def table2_csv(rows) -> str:
    header = ["theta", "W1", "W2", "gamma", "sequence", "p1", "p2", "p3", "V1", "V2",
              "published_p1", "published_p2", "published_p3", "published_V1", "published_V2",
              "err_p1", "err_p2", "err_p3", "err_V1", "err_V2", "converged"]
    out = []
    for r in rows:
        sim = list(r.price) + list(r.utilities)
        out.append(["/".join(format(v, ".4g") for v in r.theta), r.W1, r.W2, r.gamma, r.sequence]
                   + sim + list(r.published)
                   + [abs(a - b) for a, b in zip(sim, r.published)] + [r.converged])
    return to_csv(header, out)


# --------------------------------------------------------------------------
# omega-dagger verification batches


# (J, alpha, gamma_M, gamma_T) -> (D, mean delta_x, Var delta_x) as published
TABLE3_PUBLISHED = (
    ((10, 0.1, 0.3, 0.3), (3.68e-5, 0.0487, 1.56e-4)),
    ((10, 0.5, 0.3, 0.3), (2.86e-5, 0.0512, 4.09e-4)),
    ((10, 0.3, 0.3, 0.3), (1.08e-5, 0.0437, 1.90e-4)),
    ((10, 0.3, -0.2, -0.2), (1.70e-6, 0.0166, 1.49e-5)),
    ((10, 0.3, -0.2, 0.5), (1.57e-5, 0.1055, 2.31e-4)),
    ((10, 0.3, -0.2, -0.5), (4.00e-7, 0.0184, 2.28e-5)),
    ((10, 0.3, -0.2, (0.2, 0.8)), (1.60e-4, 0.1886, 3.95e-3)),
    ((10, 0.3, -0.2, (-0.8, -0.2)), (1.20e-6, 0.0164, 1.88e-5)),
    ((100, 0.3, -0.2, (-0.8, -0.2)), (8.00e-7, 0.0186, 2.90e-4)),
    ((100, 0.3, -0.2, (0.2, 0.8)), (2.12e-5, 0.2998, 5.00e-3)),
)


@dataclass(frozen=True)
class Table3Run:
    kld: float
    delta_x: float
    converged: bool
    rounds_used: int
    kkt: float


def _table3_task(spec: RandomMarketSpec) -> Table3Run:
    m = generate_market(spec)
    traj = run(m.config)
    cfg = m.config
    traders = [t.utility for t in cfg.traders]
    # each trader's own gamma enters its weight
    om = np.array([
        omega_dagger([spec.a], [spec.b], [w], g)[0] for w, g in zip(m.w0, m.gammas)
    ])
    sol = solve_pareto(om, cfg.market_maker.utility, traders, cfg.market_maker.W0, m.w0)
    rep = convergence_report(traj)
    return Table3Run(
        kld(traj.final_price, sol.price),
        delta_x(traj.final_state.allocation(), sol.allocation()),
        traj.converged,
        traj.rounds_used,
        rep.max_residual,
    )


def batch_seeds(seed: int, tag: int, runs: int) -> list:
    rng = SplitMix64(seed * 1_000_003 + tag)
    return [rng.next_u64() for _ in range(runs)]


@dataclass(frozen=True)
class Table3Row:
    J: int
    alpha: float
    gamma_M: float
    gamma_T: float | tuple
    runs: list
    published: tuple

    @property
    def mean_kld(self) -> float:
        return float(np.mean([r.kld for r in self.runs]))

    @property
    def mean_delta_x(self) -> float:
        return float(np.mean([r.delta_x for r in self.runs]))

    @property
    def var_delta_x(self) -> float:
        return float(np.var([r.delta_x for r in self.runs]))

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.runs)


def table3_row(J, alpha, gamma_M, gamma_T, runs: int = 100, seed: int = 0, tag: int = 0, published=None):
    specs = [
        RandomMarketSpec(J=J, alpha=alpha, gamma_M=gamma_M, gamma_T=gamma_T, seed=s)
        for s in batch_seeds(seed, tag, runs)
    ]
    return Table3Row(J, alpha, gamma_M, gamma_T, parallel_map(_table3_task, specs), published)


def table3(runs: int = 100, seed: int = 0, rows=None) -> list:
    chosen = range(len(TABLE3_PUBLISHED)) if rows is None else rows
    out = []
    for k in chosen:
        (J, alpha, gM, gT), pub = TABLE3_PUBLISHED[k]
        out.append(table3_row(J, alpha, gM, gT, runs, seed, k, pub))
    return out


def table3_csv(rows) -> str:
    header = ["J", "alpha", "gamma_M", "gamma_T", "runs", "mean_kld", "mean_delta_x", "var_delta_x",
              "published_kld", "published_mean_delta_x", "published_var_delta_x", "all_converged"]
    out = []
    for r in rows:
        gT = "[{},{}]".format(*r.gamma_T) if isinstance(r.gamma_T, tuple) else r.gamma_T
        out.append([r.J, r.alpha, r.gamma_M, gT, len(r.runs), r.mean_kld, r.mean_delta_x, r.var_delta_x,
                    *(r.published or ("", "", "")), r.all_converged])
    return to_csv(header, out)


# --------------------------------------------------------------------------
# HARA price formula against the wealth-weighted baseline


FIG2_GAMMAS = tuple(round(g, 2) for g in np.arange(-1.0, 0.91, 0.1))
FIG2_W0 = 2.0


@dataclass(frozen=True)
class Fig2Run:
    kld_hara: float
    kld_baseline: float
    converged: bool


def _fig2_task(args) -> Fig2Run:
    spec, random_gamma = args
    m = generate_market(spec)
    traj = run(m.config)
    g = spec.gamma_M
    w_hat0 = float(risk_adjusted_wealth(spec.W0, spec.a_M, spec.b_M, g))
    w_hat = risk_adjusted_wealth(m.w0, spec.a, spec.b, g)
    p = traj.final_price
    return Fig2Run(
        kld(p, hara_approx_price(m.theta, m.beliefs, w_hat0, w_hat, g)),
        kld(p, wealth_weighted_price(m.theta, m.beliefs, w_hat0, w_hat)),
        traj.converged,
    )


@dataclass(frozen=True)
class Fig2Point:
    gamma: float
    random_gamma: bool
    runs: list

    @property
    def mean_kld_hara(self) -> float:
        return float(np.mean([r.kld_hara for r in self.runs]))

    @property
    def mean_kld_baseline(self) -> float:
        return float(np.mean([r.kld_baseline for r in self.runs]))


def fig2_point(gamma: float, runs: int = 100, seed: int = 0, random_gamma: bool = False, J: int = 10,
               alpha: float = 0.3) -> Fig2Point:
    gT = (gamma - 0.1, min(gamma + 0.1, 0.99)) if random_gamma else gamma
    tag = 10_000 + int(round(gamma * 100)) + (5_000 if random_gamma else 0)
    specs = [
        (RandomMarketSpec(J=J, alpha=alpha, gamma_M=gamma, gamma_T=gT, W0=FIG2_W0, seed=s), random_gamma)
        for s in batch_seeds(seed, tag, runs)
    ]
    return Fig2Point(gamma, random_gamma, parallel_map(_fig2_task, specs))


def fig2(gammas=FIG2_GAMMAS, runs: int = 100, seed: int = 0, random_gamma: bool = False) -> list:
    return [fig2_point(g, runs, seed, random_gamma) for g in gammas]


def fig2_csv(points) -> str:
    header = ["gamma", "random_gamma", "runs", "mean_kld_hara", "mean_kld_baseline", "all_converged"]
    out = [[p.gamma, p.random_gamma, len(p.runs), p.mean_kld_hara, p.mean_kld_baseline,
            all(r.converged for r in p.runs)] for p in points]
    return to_csv(header, out)
