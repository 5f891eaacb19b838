"""JSON market configuration and the random-market generator.

A configuration file looks like::

    {
      "securities": 2,
      "market_maker": {"utility": {"family": "exponential", "belief": [0.5, 0.5], "beta": 1.0},
                       "W0": 1.0},
      "traders": [{"utility": {"family": "exponential", "belief": [0.8, 0.2], "beta": 1.0},
                   "w0": 1.0}],
      "sequence": {"kind": "round_robin", "order": [1], "max_rounds": 100000},
      "tolerances": {"trade_eps": 1e-10, "root_eps": 1e-12},
      "output": {"path": "run.csv", "format": "csv"}
    }

Errors name the offending field (``traders[0].utility.beta``) or, for broken
JSON, the line and column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import simplex
from .engine import DEFAULT_TRADE_EPS, Random, RoundRobin, TradingSequence, identity_order, sequence_from_dict
from .errors import ConfigError
from .rng import SplitMix64
from .utility import Hara, UtilitySpec, utility_from_dict


@dataclass(frozen=True, eq=False)
class MarketMakerConfig:
    utility: UtilitySpec
    W0: float


@dataclass(frozen=True, eq=False)
class TraderConfig:
    utility: UtilitySpec
    w0: float


@dataclass(frozen=True)
class Tolerances:
    trade_eps: float = DEFAULT_TRADE_EPS
    root_eps: float = 1e-12


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ValueError(f"output format must be 'csv' or 'json', got {self.format!r}")


@dataclass(frozen=True, eq=False)
class MarketConfig:
    securities: int
    market_maker: MarketMakerConfig
    traders: tuple
    sequence: TradingSequence
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.securities < 2:
            raise ConfigError("securities: need at least two outcomes")
        if not self.market_maker.W0 > 0:
            raise ConfigError("market_maker.W0: must be positive")
        if not self.traders:
            raise ConfigError("traders: need at least one trader")
        for j, t in enumerate(self.traders):
            if not t.w0 > 0:
                raise ConfigError(f"traders[{j}].w0: must be positive")
        specs = [("market_maker.utility", self.market_maker.utility)]
        specs += [(f"traders[{j}].utility", t.utility) for j, t in enumerate(self.traders)]
        for where, spec in specs:
            if spec.n_outcomes != self.securities:
                raise ConfigError(
                    f"{where}: belief has {spec.n_outcomes} entries but securities = {self.securities}"
                )
        if isinstance(self.sequence, RoundRobin) and len(self.sequence.order) != len(self.traders):
            raise ConfigError("sequence.order: length must equal the number of traders")

    @property
    def n_traders(self) -> int:
        return len(self.traders)

    def with_sequence(self, sequence: TradingSequence) -> "MarketConfig":
        return MarketConfig(self.securities, self.market_maker, self.traders, sequence, self.tolerances, self.output)

    def with_tolerances(self, **kw) -> "MarketConfig":
        tol = Tolerances(**{**self.tolerances.__dict__, **kw})
        return MarketConfig(self.securities, self.market_maker, self.traders, self.sequence, tol, self.output)

    def to_dict(self) -> dict:
        return {
            "securities": self.securities,
            "market_maker": {"utility": self.market_maker.utility.to_dict(), "W0": self.market_maker.W0},
            "traders": [{"utility": t.utility.to_dict(), "w0": t.w0} for t in self.traders],
            "sequence": self.sequence.to_dict(),
            "tolerances": {"trade_eps": self.tolerances.trade_eps, "root_eps": self.tolerances.root_eps},
            "output": {"path": self.output.path, "format": self.output.format},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _field(d, key, where, cast=None):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    if key not in d:
        raise ConfigError(f"{where}.{key}: missing required field")
    v = d[key]
    if cast is None:
        return v
    try:
        return cast(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from None


def _utility(d, where) -> UtilitySpec:
    try:
        return utility_from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"{where}: bad parameters ({exc})") from None
    except (ValueError, AssertionError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(d) -> MarketConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object")
    n = _field(d, "securities", "config", int)
    mm = _field(d, "market_maker", "config")
    market_maker = MarketMakerConfig(
        _utility(_field(mm, "utility", "market_maker"), "market_maker.utility"),
        _field(mm, "W0", "market_maker", float),
    )
    raw_traders = _field(d, "traders", "config")
    if not isinstance(raw_traders, list):
        raise ConfigError("traders: expected a list")
    traders = tuple(
        TraderConfig(
            _utility(_field(t, "utility", f"traders[{j}]"), f"traders[{j}].utility"),
            _field(t, "w0", f"traders[{j}]", float),
        )
        for j, t in enumerate(raw_traders)
    )
    try:
        seq_d = d.get("sequence", {"kind": "round_robin"})
        sequence = sequence_from_dict(seq_d, len(traders))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"sequence: {exc}") from None
    tol_d = d.get("tolerances", {})
    try:
        tolerances = Tolerances(
            float(tol_d.get("trade_eps", DEFAULT_TRADE_EPS)), float(tol_d.get("root_eps", 1e-12))
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"tolerances: {exc}") from None
    out_d = d.get("output", {}) or {}
    try:
        output = OutputConfig(out_d.get("path"), out_d.get("format", "csv"))
    except (ValueError, AttributeError) as exc:
        raise ConfigError(f"output: {exc}") from None
    return MarketConfig(n, market_maker, traders, sequence, tolerances, output)


def config_from_json(text: str) -> MarketConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(d)


def load_config(path) -> MarketConfig:
    return config_from_json(Path(path).read_text())


# --------------------------------------------------------------------------
# random markets for the formula-quality experiments


@dataclass(frozen=True)
class RandomMarketSpec:
    """Random HARA markets with two belief groups.

    Draw order from one SplitMix64 stream seeded with ``seed``: for each
    trader in turn, its initial wealth, then its ``I`` noise entries, then
    its gamma when ``gamma_T`` is an interval. The sequence seed is the next
    raw 64-bit output. Traders ``0 .. J//2 - 1`` use the first baseline
    belief and the rest the second.
    """

    J: int
    alpha: float
    baseline_beliefs: tuple = ((0.6, 0.2, 0.2), (0.2, 0.2, 0.6))
    wealth_range: tuple = (3.0, 10.0)
    gamma_M: float = 0.3
    gamma_T: float | tuple = 0.3
    seed: int = 0
    theta: tuple = (0.3, 0.3, 0.4)
    W0: float = 10.0
    a: float = 1.0
    b: float = 0.0
    a_M: float = 1.0
    b_M: float = 0.0
    trade_eps: float = DEFAULT_TRADE_EPS
    max_rounds: int = 100_000

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        lo, hi = self.wealth_range
        if not 0 < lo <= hi:
            raise ValueError("wealth_range must satisfy 0 < low <= high")


@dataclass(frozen=True, eq=False)
class RandomMarket:
    config: MarketConfig
    beliefs: np.ndarray  # (J, I)
    w0: np.ndarray
    gammas: np.ndarray
    theta: np.ndarray


def generate_market(spec: RandomMarketSpec) -> RandomMarket:
    rng = SplitMix64(spec.seed)
    theta = simplex(spec.theta)
    n = theta.size
    bases = [simplex(b) for b in spec.baseline_beliefs]
    if any(b.size != n for b in bases):
        raise ValueError("baseline beliefs must match the market maker belief length")
    half = spec.J // 2 if len(bases) > 1 else spec.J
    beliefs, w0s, gammas = [], [], []
    for j in range(spec.J):
        w0s.append(rng.uniform(*spec.wealth_range))
        eps = np.array([rng.uniform() for _ in range(n)])
        base = bases[0] if j < half else bases[-1]
        pi = spec.alpha * base + (1.0 - spec.alpha) * eps / eps.sum()
        beliefs.append(pi / pi.sum())
        if isinstance(spec.gamma_T, (tuple, list)):
            gammas.append(rng.uniform(*spec.gamma_T))
        else:
            gammas.append(float(spec.gamma_T))
    sequence = Random(rng.next_u64(), spec.max_rounds)
    mm = MarketMakerConfig(Hara(theta, spec.a_M, spec.b_M, spec.gamma_M), spec.W0)
    traders = tuple(
        TraderConfig(Hara(pi, spec.a, spec.b, g), w) for pi, w, g in zip(beliefs, w0s, gammas)
    )
    cfg = MarketConfig(n, mm, traders, sequence, Tolerances(trade_eps=spec.trade_eps))
    return RandomMarket(cfg, np.array(beliefs), np.array(w0s), np.array(gammas), np.array(theta))


__all__ = [
    "MarketConfig",
    "MarketMakerConfig",
    "TraderConfig",
    "Tolerances",
    "OutputConfig",
    "RandomMarketSpec",
    "RandomMarket",
    "config_from_dict",
    "config_from_json",
    "load_config",
    "generate_market",
    "identity_order",
]
