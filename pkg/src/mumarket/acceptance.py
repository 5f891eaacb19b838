"""Acceptance checks shared by ``mumarket verify`` and the test suite.

Each check returns a ``CheckResult``; checks 1-9 and 11 are binding, check 10
(the two-trader HARA table) only reports whether a candidate market-maker
belief reproduces the published numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import MarketConfig, MarketMakerConfig, TraderConfig
from .core import CONSERVATION_TOL
from .engine import Random, RoundRobin, Trajectory, convergence_report, identity_order, run
from .equilibrium import (
    dual_power_mean_price,
    exp_limiting_price,
    exp_price_update,
    penalty_stationary_point,
    power_mean_price,
    risk_measure_equilibrium,
    solve_pareto,
)
from .experiments import fig2_point, table2, table2_best_theta, table3_row
from .oracles import simplex_optimize, summed_penalty
from .pricing import cost_function_value, induced_scoring_rule, instantaneous_price, price_order
from .rng import SplitMix64
from .utility import (
    CompositeEntropicLog,
    Crra,
    Exponential,
    Hara,
    PowerPenalty,
    RelativeEntropy,
    RiskMeasure,
)

EXP_LIMIT_TOL = 1e-6
EXP_RUN_SECONDS = 1.0
UPDATE_TOL = 1e-10
INVARIANCE_TOL = 1e-6
KKT_TOL = 1e-7
REALLOC_TOL = 1e-6
AGG_TOL = 1e-7
RM_EXP_TOL = 1e-6
UTILITY_PIN_TOL = 1e-9
FD_TOL = 1e-4
FD_EPS = 1e-6
TELESCOPE_TOL = 1e-8
TRANSLATION_TOL = 1e-10
TABLE2_TOL = 0.005
BATCH_SECONDS = 180.0


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    binding: bool = True
    flagged: bool = False
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        if self.flagged:
            status = "FLAG"
        else:
            status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:>2} {self.name}: {self.detail}"


@dataclass
class Context:
    """Shared state: trade tolerance and every trajectory produced so far."""

    trade_eps: float = 1e-10
    seed: int = 2024
    trajectories: list = field(default_factory=list)

    def simulate(self, config: MarketConfig) -> Trajectory:
        traj = run(config, trade_eps=self.trade_eps)
        self.trajectories.append((config, traj))
        return traj


# --------------------------------------------------------------------------
# random market builders


def _belief(rng: SplitMix64, n: int, floor: float = 0.02) -> np.ndarray:
    v = np.array([rng.uniform(floor, 1.0) for _ in range(n)])
    return v / v.sum()


def random_exponential_market(rng: SplitMix64, n: int | None = None, J: int | None = None) -> MarketConfig:
    n = n if n is not None else 2 + rng.below(4)
    J = J if J is not None else 1 + rng.below(10)
    mm = MarketMakerConfig(Exponential(_belief(rng, n), rng.uniform(0.2, 5.0)), rng.uniform(1.0, 5.0))
    traders = tuple(
        TraderConfig(Exponential(_belief(rng, n), rng.uniform(0.2, 5.0)), rng.uniform(1.0, 5.0))
        for _ in range(J)
    )
    return MarketConfig(n, mm, traders, identity_order(J))


def random_entropic_market(rng: SplitMix64, n: int = 3, J: int = 3) -> MarketConfig:
    mm = MarketMakerConfig(RiskMeasure(RelativeEntropy(_belief(rng, n), rng.uniform(0.2, 5.0))), rng.uniform(1.0, 5.0))
    traders = tuple(
        TraderConfig(RiskMeasure(RelativeEntropy(_belief(rng, n), rng.uniform(0.2, 5.0))), rng.uniform(1.0, 5.0))
        for _ in range(J)
    )
    return MarketConfig(n, mm, traders, identity_order(J))


def _exp_params(config: MarketConfig):
    U = config.market_maker.utility
    Vs = [t.utility for t in config.traders]
    return U.belief, U.beta, [V.belief for V in Vs], [V.beta for V in Vs]


# --------------------------------------------------------------------------
# checks


def check_exponential_limit(ctx: Context, markets: int = 20) -> CheckResult:
    rng = SplitMix64(ctx.seed + 1)
    run(random_exponential_market(SplitMix64(0)), trade_eps=ctx.trade_eps)  # compile outside the timing
    worst, slowest, unconverged = 0.0, 0.0, 0
    for _ in range(markets):
        cfg = random_exponential_market(rng)
        t0 = time.perf_counter()
        traj = ctx.simulate(cfg)
        slowest = max(slowest, time.perf_counter() - t0)
        unconverged += not traj.converged
        worst = max(worst, float(np.max(np.abs(traj.final_price - exp_limiting_price(*_exp_params(cfg))))))
    ok = worst <= EXP_LIMIT_TOL and slowest < EXP_RUN_SECONDS and unconverged == 0
    return CheckResult(1, "exponential closed-form limit", ok,
                       f"max |p_sim - p*| = {worst:.2e} (tol {EXP_LIMIT_TOL:g}), slowest run {slowest:.3f}s, "
                       f"{unconverged} unconverged of {markets}",
                       data={"max_error": worst, "slowest": slowest})


def replay_positions(config: MarketConfig, traj: Trajectory):
    """Yield (snapshot, x_before, y_after, x_all_after) by accumulating the recorded steps."""
    n = config.securities
    y = np.full(n, config.market_maker.W0)
    xs = [np.full(n, t.w0) for t in config.traders]
    for s in traj.snapshots:
        before = xs[s.trader].copy()
        xs[s.trader] = xs[s.trader] + s.z
        y = y - s.z
        yield s, before, y, xs


def check_price_update(ctx: Context) -> CheckResult:
    if not any(isinstance(c.market_maker.utility, Exponential) for c, _ in ctx.trajectories):
        rng = SplitMix64(ctx.seed + 2)
        for _ in range(5):
            ctx.simulate(random_exponential_market(rng))
    worst, trades = 0.0, 0
    for cfg, traj in ctx.trajectories:
        if not isinstance(cfg.market_maker.utility, Exponential):
            continue
        U = cfg.market_maker.utility
        p = np.array(U.belief)
        for s, before, _, _ in replay_positions(cfg, traj):
            V = cfg.traders[s.trader].utility
            pred = exp_price_update(p, before, V.belief, V.beta, U.beta)
            worst = max(worst, float(np.max(np.abs(pred - s.price))))
            p = s.price
            trades += 1
    return CheckResult(2, "one-step exponential price update", worst <= UPDATE_TOL and trades > 0,
                       f"max deviation {worst:.2e} over {trades} trades (tol {UPDATE_TOL:g})",
                       data={"max_error": worst})


def _sequences(J: int):
    yield "round-robin", identity_order(J)
    yield "reversed", RoundRobin(tuple(range(J, 0, -1)))
    for s in (11, 12, 13):
        yield f"random({s})", Random(s)


def check_sequence_invariance(ctx: Context) -> CheckResult:
    rng = SplitMix64(ctx.seed + 3)
    worst = 0.0
    parts = []
    for label, cfg in (("exponential", random_exponential_market(rng, 4, 5)),
                       ("entropic", random_entropic_market(rng, 3, 4))):
        prices = []
        for _, seq in _sequences(cfg.n_traders):
            prices.append(ctx.simulate(cfg.with_sequence(seq)).final_price)
        spread = float(np.max(np.ptp(np.array(prices), axis=0)))
        worst = max(worst, spread)
        parts.append(f"{label} spread {spread:.2e}")
    return CheckResult(3, "sequence invariance", worst <= INVARIANCE_TOL,
                       ", ".join(parts) + f" (tol {INVARIANCE_TOL:g})", data={"spread": worst})


def _hara_example(order) -> MarketConfig:
    mm = MarketMakerConfig(Hara((1 / 3, 1 / 3, 1 / 3), 1.0, 0.8, 0.5), 1.0)
    traders = (TraderConfig(Hara((0.2, 0.2, 0.6), 1.0, 0.0, 0.5), 10.0),
               TraderConfig(Hara((0.6, 0.1, 0.3), 1.0, 0.0, 0.5), 10.0))
    return MarketConfig(3, mm, traders, RoundRobin(order))


def _crra_market() -> MarketConfig:
    mm = MarketMakerConfig(Crra((0.3, 0.3, 0.4), 0.5), 4.0)
    traders = (TraderConfig(Crra((0.6, 0.2, 0.2), 0.4), 3.0),
               TraderConfig(Crra((0.2, 0.3, 0.5), 0.6), 5.0),
               TraderConfig(Crra((0.25, 0.5, 0.25), 0.5), 2.0))
    return MarketConfig(3, mm, traders, Random(99))


def check_pareto(ctx: Context) -> CheckResult:
    for order in ((1, 2), (2, 1)):
        ctx.simulate(_hara_example(order))
    ctx.simulate(_crra_market())
    worst_kkt, worst_alloc, runs, unconverged = 0.0, 0.0, 0, 0
    for cfg, traj in ctx.trajectories:
        U = cfg.market_maker.utility
        if not traj.converged:
            unconverged += 1
            continue
        rep = convergence_report(traj)
        worst_kkt = max(worst_kkt, rep.max_residual)
        if U.separable:
            sol = solve_pareto(rep.omega, U, [t.utility for t in cfg.traders], cfg.market_maker.W0,
                               [t.w0 for t in cfg.traders])
            alloc = np.vstack([sol.allocation(), sol.y_star])
        else:
            pens = [U.penalty] + [t.utility.penalty for t in cfg.traders]
            sol = risk_measure_equilibrium(pens, cfg.market_maker.W0, [t.w0 for t in cfg.traders],
                                           reference=traj.final_state.allocation())
            alloc = np.vstack([sol.allocation(), sol.y_star])
        sim = np.vstack([traj.final_state.allocation(), traj.final_state.y])
        worst_alloc = max(worst_alloc, float(np.max(np.abs(alloc - sim))))
        runs += 1
    ok = worst_kkt <= KKT_TOL and worst_alloc <= REALLOC_TOL and unconverged == 0
    return CheckResult(4, "Pareto optimality of limits", ok,
                       f"{runs} converged runs, max KKT residual {worst_kkt:.2e} (tol {KKT_TOL:g}), "
                       f"max re-solve deviation {worst_alloc:.2e} (tol {REALLOC_TOL:g}), {unconverged} unconverged",
                       data={"kkt": worst_kkt, "realloc": worst_alloc})


def check_risk_measure_aggregation(ctx: Context, instances: int = 10) -> CheckResult:
    rng = SplitMix64(ctx.seed + 5)
    agg_err, exp_err, brute_err = 0.0, 0.0, 0.0
    for _ in range(instances):
        n = 2 + rng.below(4)
        J = 1 + rng.below(5)
        pens = [RelativeEntropy(_belief(rng, n), rng.uniform(0.2, 5.0)) for _ in range(J + 1)]
        w0 = [rng.uniform(1.0, 5.0) for _ in range(J)]
        sol = risk_measure_equilibrium(pens, rng.uniform(1.0, 5.0), w0)
        generic = penalty_stationary_point(pens).price
        agg_err = max(agg_err, float(np.max(np.abs(sol.price - generic))))
        q, _, _ = simplex_optimize(*summed_penalty(pens), n)
        brute_err = max(brute_err, float(np.max(np.abs(sol.price - q))))
        p_exp = exp_limiting_price(pens[0].belief, pens[0].beta, [p.belief for p in pens[1:]],
                                   [p.beta for p in pens[1:]])
        exp_err = max(exp_err, float(np.max(np.abs(sol.price - p_exp))))
    ok = agg_err <= AGG_TOL and exp_err <= RM_EXP_TOL and brute_err <= 1e-8
    return CheckResult(5, "risk-measure aggregation", ok,
                       f"vs nested-root aggregate {agg_err:.2e} (tol {AGG_TOL:g}), vs brute force {brute_err:.2e}, "
                       f"vs exponential geometric mean {exp_err:.2e} (tol {RM_EXP_TOL:g})",
                       data={"agg": agg_err, "exp": exp_err, "brute": brute_err})


def check_power_mean_forms(ctx: Context, per_gamma: int = 5) -> CheckResult:
    rng = SplitMix64(ctx.seed + 6)
    verdicts = {}
    worst_match = 0.0
    for gamma in (-1.0, -0.5, 0.5):
        d_stated, d_foc = 0.0, 0.0
        for _ in range(per_gamma):
            n = 2 + rng.below(4)
            J = 1 + rng.below(4)
            beliefs = [_belief(rng, n, 0.05) for _ in range(J + 1)]
            h = [rng.uniform(0.2, 2.0) for _ in range(J + 1)]
            pens = [PowerPenalty(b, gamma, w) for b, w in zip(beliefs, h)]
            f, g = summed_penalty(pens)
            # power penalties are concave for gamma < 1: the stationary point is a maximum
            q, _, _ = simplex_optimize(f, g, n, maximize=True)
            d_stated = max(d_stated, float(np.max(np.abs(q - power_mean_price(beliefs[0], beliefs[1:], h, gamma)))))
            d_foc = max(d_foc, float(np.max(np.abs(q - dual_power_mean_price(beliefs[0], beliefs[1:], h, gamma)))))
        form = "first-order form" if d_foc < d_stated else "stated form"
        verdicts[gamma] = (form, d_stated, d_foc)
        worst_match = max(worst_match, min(d_stated, d_foc))
    forms = {v[0] for v in verdicts.values()}
    ok = worst_match <= 1e-6 and len(forms) == 1
    detail = "; ".join(f"gamma={g:g}: {v[0]} (|stated| {v[1]:.1e}, |first-order| {v[2]:.1e})" for g, v in verdicts.items())
    return CheckResult(6, "power-mean discrepancy resolution", ok,
                       f"brute-force maximizer matches the {forms.pop() if len(forms) == 1 else 'mixed'}; {detail}",
                       data={"verdicts": verdicts})


def check_conservation(ctx: Context) -> CheckResult:
    worst_cons, worst_u, snaps = 0.0, 0.0, 0
    for cfg, traj in ctx.trajectories:
        u0 = traj.initial_market_utility
        total = cfg.market_maker.W0 + sum(t.w0 for t in cfg.traders)
        for s, _, y, xs in replay_positions(cfg, traj):
            worst_cons = max(worst_cons, float(np.max(np.abs(y + np.sum(xs, axis=0) - total))))
            worst_u = max(worst_u, abs(s.market_utility - u0))
            snaps += 1
    ok = worst_cons <= CONSERVATION_TOL and worst_u <= UTILITY_PIN_TOL
    return CheckResult(7, "conservation and utility preservation", ok,
                       f"{snaps} snapshots over {len(ctx.trajectories)} runs: wealth residual {worst_cons:.2e}, "
                       f"|U - U0| {worst_u:.2e} (tol 1e-9)", data={"cons": worst_cons, "util": worst_u})


def _random_family(rng: SplitMix64, family: str, n: int):
    b = _belief(rng, n)
    if family == "exponential":
        return Exponential(b, rng.uniform(0.2, 3.0))
    if family == "hara":
        return Hara(b, rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0), rng.uniform(-1.0, 0.8))
    if family == "crra":
        return Crra(b, rng.uniform(0.2, 0.8))
    if family == "risk_measure":
        return RiskMeasure(RelativeEntropy(b, rng.uniform(0.2, 3.0)))
    return CompositeEntropicLog(b, rng.uniform(0.2, 3.0), rng.uniform(0.1, 1.0), rng.uniform(0.5, 2.0))


FAMILIES = ("exponential", "hara", "crra", "risk_measure", "composite_entropic_log")


def check_fd_prices(ctx: Context, states: int = 100) -> CheckResult:
    rng = SplitMix64(ctx.seed + 8)
    worst = {}
    for fam in FAMILIES:
        w = 0.0
        for _ in range(states):
            n = 2 + rng.below(3)
            U = _random_family(rng, fam, n)
            W0 = rng.uniform(1.0, 4.0)
            # a reachable state: start riskless, let the market absorb a random order
            dq = np.array([rng.uniform(-0.5, 0.5) for _ in range(n)])
            y = price_order(U, np.full(n, W0), W0, dq).post_y
            grad_p = instantaneous_price(U, y)
            d = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = FD_EPS
                d[i] = (price_order(U, y, W0, e).delta_w - price_order(U, y, W0, -e).delta_w) / (2 * FD_EPS)
            w = max(w, float(np.max(np.abs(d / d.sum() - grad_p))))
        worst[fam] = w
    top = max(worst.values())
    return CheckResult(8, "instantaneous price vs finite differences", top <= FD_TOL,
                       ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (tol {FD_TOL:g})", data=worst)


def check_mechanism_equivalence(ctx: Context, samples: int = 1000) -> CheckResult:
    rng = SplitMix64(ctx.seed + 9)
    tele, trans, proper_gap, proper_fail = 0.0, 0.0, math.inf, 0
    for fam in ("exponential", "hara", "crra", "risk_measure"):
        for _ in range(5):
            n = 2 + rng.below(3)
            U = _random_family(rng, fam, n)
            W0 = rng.uniform(1.0, 4.0)
            y = np.full(n, W0)
            q = np.zeros(n)
            for _ in range(6):
                dq = np.array([rng.uniform(-0.5, 0.5) for _ in range(n)])
                quote = price_order(U, y, W0, dq)
                c_prev, c_next = cost_function_value(U, W0, q), cost_function_value(U, W0, q + dq)
                tele = max(tele, abs((c_next - c_prev) - quote.delta_w))
                y, q = quote.post_y, q + dq
            t = rng.uniform(-2.0, 2.0)
            trans = max(trans, abs(cost_function_value(U, W0, q + t) - cost_function_value(U, W0, q) - t))
    for fam in ("exponential", "hara", "crra"):
        n = 3
        U = _random_family(rng, fam, n)
        W0 = rng.uniform(1.0, 4.0)
        for _ in range(samples // 3 + 1):
            p = _belief(rng, n)
            r = _belief(rng, n)
            gap = float(p @ induced_scoring_rule(U, W0, p) - p @ induced_scoring_rule(U, W0, r))
            proper_gap = min(proper_gap, gap)
            proper_fail += gap < -1e-10
    ok = tele <= TELESCOPE_TOL and trans <= TRANSLATION_TOL and proper_fail == 0
    return CheckResult(9, "cost function, order pricing and scoring rule agree", ok,
                       f"telescoping {tele:.2e} (tol {TELESCOPE_TOL:g}), translation {trans:.2e} "
                       f"(tol {TRANSLATION_TOL:g}), properness min gap {proper_gap:.2e}, {proper_fail} violations",
                       data={"tele": tele, "trans": trans})


def check_table2(ctx: Context) -> CheckResult:
    rows = table2()
    best = table2_best_theta(rows)
    mine = {(r.W1, r.W2, r.gamma, r.sequence): r for r in rows if r.theta == best}
    s1, s2 = mine[(10.0, 10.0, 0.5, "S1")], mine[(10.0, 10.0, 0.5, "S2")]
    price_err = max(s1.price_error, s2.price_error)
    # published pattern: S1 gives trader 1 more and trader 2 less than S2
    sign_ok = (s1.utilities[0] - s2.utilities[0]) * (4.977 - 4.975) > 0 and \
              (s1.utilities[1] - s2.utilities[1]) * (5.144 - 5.146) > 0
    matched = price_err <= TABLE2_TOL and sign_ok
    detail = (f"best theta {tuple(round(v, 4) for v in best)}: row-1 price {np.round(s1.price, 3).tolist()} "
              f"vs (0.401, 0.189, 0.41), max error {price_err:.3f} (tol {TABLE2_TOL}); "
              f"S1/S2 utility asymmetry sign {'reproduced' if sign_ok else 'not reproduced'}")
    if not matched:
        detail += "; open question on the market-maker belief remains unresolved"
    return CheckResult(10, "two-trader HARA table (non-binding)", True, detail, binding=False,
                       flagged=not matched, data={"rows": rows, "best": best})


def check_formula_quality(ctx: Context, runs: int = 100) -> CheckResult:
    t0 = time.perf_counter()
    row = table3_row(10, 0.3, 0.3, 0.3, runs=runs, seed=ctx.seed)
    neg = fig2_point(-0.5, runs=runs, seed=ctx.seed)
    zero = fig2_point(0.0, runs=max(1, runs // 10), seed=ctx.seed)
    elapsed = time.perf_counter() - t0
    coincide = max(abs(r.kld_hara - r.kld_baseline) for r in zero.runs)
    ok = (row.mean_delta_x <= 0.1 and row.mean_kld <= 1e-3 and neg.mean_kld_hara < neg.mean_kld_baseline
          and elapsed < BATCH_SECONDS and row.all_converged and coincide <= 1e-10)
    return CheckResult(11, "omega-dagger and HARA price formula quality", ok,
                       f"{runs} runs: mean delta_x {row.mean_delta_x:.4f} (<= 0.1), mean KLD {row.mean_kld:.2e} "
                       f"(<= 1e-3); gamma=-0.5 KLD hara {neg.mean_kld_hara:.2e} vs baseline "
                       f"{neg.mean_kld_baseline:.2e}; gamma=0 curves differ by {coincide:.1e}; {elapsed:.1f}s "
                       f"(< {BATCH_SECONDS:g}s)",
                       data={"delta_x": row.mean_delta_x, "kld": row.mean_kld, "elapsed": elapsed})


CHECKS = (
    check_exponential_limit,
    check_price_update,
    check_sequence_invariance,
    check_pareto,
    check_risk_measure_aggregation,
    check_power_mean_forms,
    check_conservation,
    check_fd_prices,
    check_mechanism_equivalence,
    check_table2,
    check_formula_quality,
)


def run_all(trade_eps: float = 1e-10, seed: int = 2024, only=None, echo=None) -> list:
    ctx = Context(trade_eps=trade_eps, seed=seed)
    results = []
    for k, check in enumerate(CHECKS, start=1):
        if only is not None and k not in only:
            continue
        try:
            res = check(ctx)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(k, check.__name__.removeprefix("check_").replace("_", " "), False,
                              f"raised {type(exc).__name__}: {exc}", binding=k != 10)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results


def all_passed(results) -> bool:
    return all(r.passed for r in results if r.binding)
