"""The numba kernels and the plain-numpy fallback must agree."""

import json
import os
import subprocess
import sys

import numpy as np

SCRIPT = r"""
import json, numpy as np
from mumarket.config import RandomMarketSpec, generate_market
from mumarket.engine import run
from mumarket.equilibrium import solve_pareto
from mumarket.utility import Hara
m = generate_market(RandomMarketSpec(J=4, alpha=0.3, seed=7))
t = run(m.config)
th = np.array([0.3, 0.3, 0.4])
sol = solve_pareto([1.0, 2.0], Hara(th, 1, 0.5, 0.3), [Hara([0.6, 0.2, 0.2], 1, 0, 0.3), Hara([0.2, 0.2, 0.6], 1, 0, 0.3)], 2.0, [3.0, 4.0])
print(json.dumps({"p": t.final_price.tolist(), "n": len(t.snapshots), "pareto": sol.price.tolist()}))
"""


def _run(flag):
    env = dict(os.environ, MUMARKET_JIT=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_jit_and_numpy_paths_agree():
    a, b = _run("1"), _run("0")
    np.testing.assert_allclose(a["p"], b["p"], atol=1e-12)
    np.testing.assert_allclose(a["pareto"], b["pareto"], atol=1e-12)
    assert abs(a["n"] - b["n"]) <= 3
