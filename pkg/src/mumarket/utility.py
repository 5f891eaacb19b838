"""
Multivariate utility (MU) functions over per-outcome net wealth.

Families:

* ``Exponential``   -(1/beta) sum_i theta_i exp(-beta w_i)
* ``Hara``          (1-g)/g sum_i theta_i (a w_i/(1-g) + b)**g   (log member at g = 0)
* ``Crra``          sum_i theta_i w_i**g,  0 < g < 1
* ``RiskMeasure``   -rho(w), rho given by the dual representation with a penalty
* ``CompositeEntropicLog``  entropic certainty equivalent plus eta sum theta ln(w + B)

Separable families expose ``kernel_params`` for the compiled solvers in
``_kernels``. Every spec has a canonical JSON form via ``to_dict`` and
``utility_from_dict``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels as K
from .core import simplex, wealth
from .errors import DomainError, NumericalError, RangeError, UnsupportedError

DUAL_EPS = 1e-14
DUAL_TOL = 1e-12


def _positive_belief(belief, what="belief"):
    p = simplex(belief)
    if np.any(p <= 0):
        raise ValueError(f"{what} must be strictly positive: {p}")
    return p


# --------------------------------------------------------------------------
# penalty functions


@dataclass(frozen=True, eq=False)
class RelativeEntropy:
    """alpha(q) = (1/beta) sum_i q_i ln(q_i / pi_i)."""

    belief: np.ndarray
    beta: float

    family = "relative_entropy"

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not self.beta > 0:
            raise ValueError("relative entropy penalty needs beta > 0")
        self._check_marginal_conditions()

    def _check_marginal_conditions(self):
        # marginals must be strictly increasing on (0, 1], finite at 1, and
        # unbounded below at 0+
        grid = np.logspace(-300, 0, 601)
        for i in range(self.belief.size):
            f = np.array([self.marginal(i, q) for q in grid])
            if not np.all(np.diff(f) > 0):
                raise ValueError("penalty marginal is not strictly increasing")
            if not math.isfinite(f[-1]):
                raise ValueError("penalty marginal is not finite at q = 1")
            if not f[0] < f[-1] - 600.0 / self.beta:
                raise ValueError("penalty marginal does not diverge at q = 0")

    @cached_property
    def log_belief(self):
        return np.log(self.belief)

    def value(self, q) -> float:
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(q > 0, q * (np.log(q) - self.log_belief), 0.0)
        return float(terms.sum() / self.beta)

    def marginal(self, i: int, qi: float) -> float:
        if not qi > 0:
            raise RangeError("relative entropy marginal is unbounded at q = 0")
        return (math.log(qi) - self.log_belief[i] + 1.0) / self.beta

    def marginal_inverse(self, i: int, m: float) -> float:
        return math.exp(self.log_belief[i] + self.beta * m - 1.0)

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "beta": self.beta}


@dataclass(frozen=True, eq=False)
class PowerPenalty:
    """alpha(q) = (1/g) sum_i q_i (q_i / pi_i)**(g - 1) * h.

    Concave for g < 1 and h > 0, so it is accepted only as an input to the
    aggregation formulas, never as a simulated agent.
    """

    belief: np.ndarray
    gamma: float
    h: float = 1.0

    family = "power"

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not self.gamma < 1 or self.gamma == 0:
            raise ValueError("power penalty needs gamma < 1, gamma != 0")
        if self.h < 0:
            raise ValueError("power penalty weight must be non-negative")

    def value(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(self.h / self.gamma * np.sum(q**self.gamma * self.belief ** (1.0 - self.gamma)))

    def marginal(self, i: int, qi: float) -> float:
        if not qi > 0:
            raise RangeError("power penalty marginal is unbounded at q = 0")
        return self.h * qi ** (self.gamma - 1.0) * self.belief[i] ** (1.0 - self.gamma)

    def marginal_inverse(self, i: int, m: float) -> float:
        if not m > 0 or self.h == 0:
            raise RangeError("power penalty marginal takes only positive values")
        c = self.h * self.belief[i] ** (1.0 - self.gamma)
        return (m / c) ** (1.0 / (self.gamma - 1.0))

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "gamma": self.gamma, "h": self.h}


@dataclass(frozen=True, eq=False)
class LogPenalty:
    """alpha(q) = h * sum_i pi_i ln(q_i)."""

    belief: np.ndarray
    h: float = 1.0

    family = "log"

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if self.h < 0:
            raise ValueError("log penalty weight must be non-negative")

    def value(self, q) -> float:
        return float(self.h * np.sum(self.belief * np.log(np.asarray(q, dtype=float))))

    def marginal(self, i: int, qi: float) -> float:
        if not qi > 0:
            raise RangeError("log penalty marginal is unbounded at q = 0")
        return self.h * self.belief[i] / qi

    def marginal_inverse(self, i: int, m: float) -> float:
        if not m > 0 or self.h == 0:
            raise RangeError("log penalty marginal takes only positive values")
        return self.h * self.belief[i] / m

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "h": self.h}


PENALTIES = {cls.family: cls for cls in (RelativeEntropy, PowerPenalty, LogPenalty)}


def penalty_from_dict(d) -> RelativeEntropy | PowerPenalty | LogPenalty:
    d = dict(d)
    try:
        cls = PENALTIES[d.pop("family")]
    except KeyError as exc:
        raise ValueError(f"unknown penalty family {exc}") from None
    return cls(**d)


def penalty_value(p, q) -> float:
    return p.value(q)


def penalty_marginal(p, i: int, qi: float) -> float:
    return p.marginal(i, qi)


def penalty_marginal_inverse(p, i: int, m: float) -> float:
    return p.marginal_inverse(i, m)


# --------------------------------------------------------------------------
# utility families


class UtilitySpec:
    family = ""
    separable = False

    @property
    def n_outcomes(self) -> int:
        return self.belief.size

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_outcomes,):
            raise ValueError(f"expected a wealth vector of length {self.n_outcomes}, got {w.shape}")
        if not self.domain_contains(w):
            raise DomainError(f"{w} is outside the domain of {self.family} utility")
        return w

    def domain_contains(self, w) -> bool:
        return bool(np.all(np.isfinite(w)))

    def inverse_marginal(self, outcome: int, m: float) -> float:
        raise UnsupportedError(f"{self.family} utility has no coordinate-wise inverse marginal")


class _Separable(UtilitySpec):
    """sum_i belief_i * u(w_i) evaluated through the compiled kernels."""

    separable = True
    kind = -1

    @cached_property
    def kernel_params(self):
        a, b, g = self._abg()
        return self.kind, np.array([a, b, g]), np.array(self.belief, dtype=float)

    @property
    def lower_bound(self) -> float:
        kind, p, _ = self.kernel_params
        return K.lower_bound(kind, p[0], p[1], p[2])

    def domain_contains(self, w) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.all(np.isfinite(w)) and np.all(w > self.lower_bound))

    def value(self, w) -> float:
        w = self._check(w)
        kind, p, wt = self.kernel_params
        return float(K.utility(kind, p[0], p[1], p[2], wt, w))

    def log_gradient(self, w) -> np.ndarray:
        w = self._check(w)
        kind, p, wt = self.kernel_params
        return np.array([K.log_marginal(kind, p[0], p[1], p[2], wt[i], w[i]) for i in range(w.size)])

    def gradient(self, w) -> np.ndarray:
        return np.exp(self.log_gradient(w))

    def inverse_marginal(self, outcome: int, m: float) -> float:
        if not (m > 0 and math.isfinite(m)):
            raise RangeError(f"marginal utility takes values in (0, inf), got {m}")
        kind, p, wt = self.kernel_params
        return float(K.inverse_marginal_log(kind, p[0], p[1], p[2], wt[outcome], math.log(m)))


@dataclass(frozen=True, eq=False)
class Exponential(_Separable):
    belief: np.ndarray
    beta: float

    family = "exponential"
    kind = K.EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not self.beta > 0:
            raise ValueError("exponential utility needs beta > 0")

    def _abg(self):
        return self.beta, 0.0, 0.0

    def value(self, w) -> float:
        w = self._check(w)
        # log-sum-exp form keeps large positions finite
        return float(-np.exp(K.logsumexp(np.log(self.belief) - self.beta * w)) / self.beta)

    def log_gradient(self, w) -> np.ndarray:
        w = self._check(w)
        return np.log(self.belief) - self.beta * w

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "beta": self.beta}


@dataclass(frozen=True, eq=False)
class Hara(_Separable):
    belief: np.ndarray
    a: float
    b: float
    gamma: float

    family = "hara"
    kind = K.HARA

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not self.a > 0 or self.b < 0:
            raise ValueError("HARA utility needs a > 0 and b >= 0")
        if not self.gamma < 1:
            raise ValueError("HARA utility needs gamma < 1")

    def _abg(self):
        return self.a, self.b, self.gamma

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "a": self.a, "b": self.b, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class Crra(_Separable):
    belief: np.ndarray
    gamma: float

    family = "crra"
    kind = K.CRRA

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not 0 < self.gamma < 1:
            raise ValueError("CRRA utility needs 0 < gamma < 1")

    def _abg(self):
        return 1.0, 0.0, self.gamma

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class RiskMeasure(UtilitySpec):
    """U(w) = -rho(w) with rho(w) = -inf_q {q.w + alpha(q)} over the simplex."""

    penalty: RelativeEntropy

    family = "risk_measure"

    def __post_init__(self):
        if not isinstance(self.penalty, RelativeEntropy):
            raise ValueError(
                "risk-measure utilities need a penalty whose marginals are increasing "
                "and unbounded below at 0 (relative entropy)"
            )

    @property
    def belief(self):
        return self.penalty.belief

    def dual(self, w):
        """Optimal probability ``q*(w)`` and the multiplier solving sum f^{-1}(lam - w) = 1."""
        w = self._check(w)
        pen = self.penalty
        lam, q, res = K.entropic_dual(pen.log_belief, float(pen.beta), w, DUAL_EPS)
        if not abs(res) <= DUAL_TOL:
            raise NumericalError(f"dual multiplier residual {res:.3e} at w={w}")
        return lam, q

    def value(self, w) -> float:
        _, q = self.dual(w)
        return float(q @ np.asarray(w, dtype=float) + self.penalty.value(q))

    def gradient(self, w) -> np.ndarray:
        return self.dual(w)[1]

    def risk(self, w) -> float:
        return -self.value(w)

    def to_dict(self):
        return {"family": self.family, "penalty": self.penalty.to_dict()}


@dataclass(frozen=True, eq=False)
class CompositeEntropicLog(UtilitySpec):
    """Entropic certainty equivalent plus a log expected-utility floor at -B."""

    belief: np.ndarray
    beta: float
    eta: float
    B: float

    family = "composite_entropic_log"

    def __post_init__(self):
        object.__setattr__(self, "belief", _positive_belief(self.belief))
        if not self.beta > 0 or self.eta < 0:
            raise ValueError("composite utility needs beta > 0 and eta >= 0")

    def domain_contains(self, w) -> bool:
        w = np.asarray(w, dtype=float)
        ok = np.all(np.isfinite(w))
        if self.eta > 0:
            ok = ok and np.all(w + self.B > 0)
        return bool(ok)

    def value(self, w) -> float:
        w = self._check(w)
        ce = -K.logsumexp(np.log(self.belief) - self.beta * w) / self.beta
        if self.eta == 0:
            return float(ce)
        return float(ce + self.eta * np.sum(self.belief * np.log(w + self.B)))

    def gradient(self, w) -> np.ndarray:
        w = self._check(w)
        lg = np.log(self.belief) - self.beta * w
        g = np.exp(lg - K.logsumexp(lg))
        if self.eta > 0:
            g = g + self.eta * self.belief / (w + self.B)
        return g

    def to_dict(self):
        return {"family": self.family, "belief": self.belief.tolist(), "beta": self.beta, "eta": self.eta, "B": self.B}


FAMILIES = {cls.family: cls for cls in (Exponential, Hara, Crra, RiskMeasure, CompositeEntropicLog)}


def utility_from_dict(d) -> UtilitySpec:
    d = dict(d)
    try:
        cls = FAMILIES[d.pop("family")]
    except KeyError as exc:
        raise ValueError(f"unknown utility family {exc}") from None
    if cls is RiskMeasure:
        return RiskMeasure(penalty_from_dict(d["penalty"]))
    return cls(**d)


# functional forms of the operations


def value(spec: UtilitySpec, w) -> float:
    return spec.value(w)


def gradient(spec: UtilitySpec, w) -> np.ndarray:
    return spec.gradient(w)


def inverse_marginal(spec: UtilitySpec, outcome: int, m: float) -> float:
    return spec.inverse_marginal(outcome, m)


def domain_contains(spec: UtilitySpec, w) -> bool:
    return spec.domain_contains(wealth(w))
