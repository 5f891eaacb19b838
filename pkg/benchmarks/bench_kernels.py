"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because ``MUMARKET_JIT`` is read
at import time. The JIT timing excludes compilation (one warm-up call).

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from mumarket.config import RandomMarketSpec, generate_market
from mumarket.engine import run
from mumarket.equilibrium import solve_pareto
from mumarket.trader import best_response
from mumarket.utility import Hara

repeat = int(sys.argv[1])
th = np.array([0.3, 0.3, 0.4])
U = Hara(th, 1.0, 0.5, 0.3)
V = Hara([0.6, 0.2, 0.2], 1.0, 0.0, 0.3)
Vs = [V, Hara([0.2, 0.2, 0.6], 1.0, 0.0, 0.3)]
x, y = np.full(3, 5.0), np.full(3, 10.0)

def br():
    for _ in range(200):
        best_response(V, U, x, y, 10.0)

def pareto():
    for w in np.linspace(0.1, 0.9, 20):
        solve_pareto([w, 1 - w], U, Vs, 10.0, [5.0, 5.0])

def market():
    run(generate_market(RandomMarketSpec(J=6, alpha=0.3, seed=1)).config)

out = {}
for name, fn in (("best_response x200", br), ("pareto x20", pareto), ("market J=6", market)):
    fn()  # warm-up (compiles under numba)
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); ts.append(time.perf_counter() - t0)
    out[name] = min(ts)
print(json.dumps(out))
"""


def measure(flag: str, repeat: int) -> dict:
    env = dict(os.environ, MUMARKET_JIT=flag)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    jit, py = measure("1", args.repeat), measure("0", args.repeat)
    print(f"{'workload':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name in jit:
        print(f"{name:<22}{jit[name]:>12.4f}{py[name]:>12.4f}{py[name] / jit[name]:>9.1f}x")


if __name__ == "__main__":
    main()
