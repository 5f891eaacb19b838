"""Command-line interface: ``mumarket <command> ...``.

Exit codes: 0 success, 1 error (bad config, infeasible order, solver
failure), 2 a simulation that did not converge within ``--max-rounds``,
3 a failed acceptance check in ``verify``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .config import load_config
from .engine import Random, RoundRobin, convergence_report, run, trajectory_csv, trajectory_json
from .equilibrium import (
    exp_limiting_price,
    hara_approx_price,
    omega_dagger,
    pareto_frontier,
    risk_adjusted_wealth,
    solve_pareto,
)
from .errors import MarketError
from .pricing import instantaneous_price, price_order
from .rng import SplitMix64
from .utility import Exponential, Hara

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3


def _vec(values) -> str:
    return ", ".join(format(float(v), ".10g") for v in values)


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_sequence(Random(args.seed, cfg.sequence.max_rounds))
    if args.eps is not None:
        cfg = cfg.with_tolerances(trade_eps=args.eps)
    traj = run(cfg, max_rounds=args.max_rounds)
    fmt = args.format or cfg.output.format
    out = args.out if args.out is not None else cfg.output.path
    text = trajectory_csv(traj) if fmt == "csv" else trajectory_json(traj)
    if out is not None:
        _write(text, out)
    rep = convergence_report(traj)
    print(f"final price: {_vec(traj.final_price)}")
    print(f"rounds used: {traj.rounds_used}")
    print(f"converged: {str(traj.converged).lower()}")
    print(f"max KKT residual: {rep.max_residual:.3e}")
    return EXIT_OK if traj.converged else EXIT_UNCONVERGED


def _parse_order(text: str, n: int) -> np.ndarray:
    try:
        dq = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"order must be {n} comma-separated numbers, got {text!r}") from None
    if dq.size != n or not np.all(np.isfinite(dq)):
        raise ValueError(f"order must have {n} finite entries, got {dq.size}")
    return dq


def cmd_price(args) -> int:
    cfg = load_config(args.config)
    U, W0 = cfg.market_maker.utility, cfg.market_maker.W0
    dq = _parse_order(args.order, cfg.securities)
    quote = price_order(U, np.full(cfg.securities, W0), W0, dq)
    print(f"delta_w: {quote.delta_w:.12g}")
    print(f"post-trade price: {_vec(instantaneous_price(U, quote.post_y))}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    cfg = load_config(args.config)
    U = cfg.market_maker.utility
    traders = [t.utility for t in cfg.traders]
    J = len(traders)
    w0 = [t.w0 for t in cfg.traders]
    if J == 2:
        ts = np.linspace(0.0, 1.0, args.points + 2)[1:-1]
        grid = [np.array([t, 1.0 - t]) for t in ts]
    else:
        rng = SplitMix64(args.seed or 0)
        grid = []
        for _ in range(args.points):
            v = np.array([-np.log(1.0 - rng.uniform()) for _ in range(J)])
            grid.append(v / v.sum())
    values = pareto_frontier(grid, U, traders, cfg.market_maker.W0, w0)
    lines = [",".join([f"omega_{j}" for j in range(1, J + 1)] + [f"V_{j}" for j in range(1, J + 1)] +
                      [f"p_{i}" for i in range(1, cfg.securities + 1)])]
    for om, vals in zip(grid, values):
        p = solve_pareto(om, U, traders, cfg.market_maker.W0, w0).price
        lines.append(",".join(format(float(v), ".17g") for v in [*om, *vals, *p]))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_formulas(args) -> int:
    cfg = load_config(args.config)
    U = cfg.market_maker.utility
    traders = [t.utility for t in cfg.traders]
    w0 = np.array([t.w0 for t in cfg.traders])
    if args.formula == "exp-limit":
        if not isinstance(U, Exponential) or not all(isinstance(V, Exponential) for V in traders):
            raise ValueError("exp-limit needs exponential utilities for every agent")
        p = exp_limiting_price(U.belief, U.beta, [V.belief for V in traders], [V.beta for V in traders])
        print(f"limiting price: {_vec(p)}")
        return EXIT_OK
    if not isinstance(U, Hara) or not all(isinstance(V, Hara) for V in traders):
        raise ValueError(f"{args.formula} needs HARA utilities for every agent")
    g = U.gamma
    if args.formula == "omega-dagger":
        om = omega_dagger([V.a for V in traders], [V.b for V in traders], w0, g)
        print(f"omega: {_vec(om)}")
        sol = solve_pareto(om, U, traders, cfg.market_maker.W0, w0)
        print(f"price at omega: {_vec(sol.price)}")
        return EXIT_OK
    w_hat0 = float(risk_adjusted_wealth(cfg.market_maker.W0, U.a, U.b, g))
    w_hat = np.array([risk_adjusted_wealth(w, V.a, V.b, g) for w, V in zip(w0, traders)])
    beliefs = [V.belief for V in traders]
    print(f"hara approximation: {_vec(hara_approx_price(U.belief, beliefs, w_hat0, w_hat, g))}")
    print(f"wealth-weighted baseline: {_vec(hara_approx_price(U.belief, beliefs, w_hat0, w_hat, 0.0))}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from . import experiments as ex

    out_dir = Path(args.out or ".")
    if args.target == "table2":
        rows = ex.table2()
        text = ex.table2_csv(rows)
        best = ex.table2_best_theta(rows)
        print(f"best-fitting market maker belief: {_vec(best)}")
    elif args.target == "table3":
        rows = ex.table3(runs=args.runs, seed=args.seed or 0,
                         rows=None if args.rows is None else [int(k) - 1 for k in args.rows.split(",")])
        text = ex.table3_csv(rows)
    else:
        pts = ex.fig2(runs=args.runs, seed=args.seed or 0, random_gamma=args.random_gamma)
        text = ex.fig2_csv(pts)
    path = out_dir / f"{args.target}.csv"
    _write(text, str(path))
    sys.stdout.write(text)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    only = None if args.only is None else {int(k) for k in args.only.split(",")}
    results = acceptance.run_all(trade_eps=args.eps if args.eps is not None else 1e-10,
                                 seed=args.seed if args.seed is not None else 2024,
                                 only=only, echo=print)
    ok = acceptance.all_passed(results)
    failed = [r.number for r in results if r.binding and not r.passed]
    print("all binding checks passed" if ok else f"failed checks: {failed}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mumarket", description="Utility-preserving market maker simulations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the trading process on a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="replace the sequence by a random one with this seed")
    p.add_argument("--out", help="trajectory output path (default: config output.path)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--max-rounds", type=int, dest="max_rounds")
    p.add_argument("--eps", type=float, help="trade size below which a step counts as no trade")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("price", help="quote an order against the initial market maker position")
    p.add_argument("--config", required=True)
    p.add_argument("--order", required=True, help="comma-separated quantities, one per security")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("frontier", help="sweep Pareto weights and print trader utilities")
    p.add_argument("--config", required=True)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("formulas", help="closed-form and approximate limiting prices")
    p.add_argument("formula", choices=("exp-limit", "hara-approx", "omega-dagger"))
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_formulas)

    p = sub.add_parser("reproduce", help="regenerate a published table or figure as CSV")
    p.add_argument("target", choices=("table2", "table3", "fig2"))
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, default=100, help="simulations per batch")
    p.add_argument("--rows", help="table3 only: comma-separated row numbers starting at 1")
    p.add_argument("--random-gamma", action="store_true", dest="random_gamma",
                   help="fig2 only: draw trader gamma from [gamma - 0.1, gamma + 0.1]")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--eps", type=float, help="trade tolerance used by the simulations")
    p.add_argument("--seed", type=int)
    p.add_argument("--only", help="comma-separated check numbers")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MarketError, ValueError, OSError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
