"""Beta posterior over the fill ratio, the decision rule and message construction."""
from __future__ import annotations

import math
from dataclasses import dataclass

NO_FEEDBACK = "no_feedback"
POSITIVE_FEEDBACK = "positive_feedback"
SOFT_FEEDBACK = "soft_feedback"
STRATEGY_KINDS = (NO_FEEDBACK, POSITIVE_FEEDBACK, SOFT_FEEDBACK)

UNDECIDED = -1

# Largest n = alpha + beta - 1 summed exactly; every tail sum fits in 64 bits.
EXACT_MAX_N = 64
LN2 = 0.6931471805599453

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAXIT = 10000


@dataclass(frozen=True)
class BetaModel:
    alpha: int = 1
    beta: int = 1

    def __post_init__(self):
        if self.alpha < 1 or self.beta < 1:
            raise ValueError("alpha and beta must be >= 1")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class FeedbackStrategy:
    kind: str = NO_FEEDBACK
    eta: float = 1500.0
    kappa: float = 2.0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == SOFT_FEEDBACK and (self.eta <= 0 or self.kappa <= 0):
            raise ValueError("soft feedback needs eta > 0 and kappa > 0")


@dataclass
class Opinion:
    """One robot's running state for one feedback strategy."""

    model: BetaModel
    obs_count: int = 0
    d_f: int = UNDECIDED
    first_decision: int = -1  # microseconds, -1 while undecided
    last_change: int = -1


def update(model: BetaModel, bit: int) -> BetaModel:
    if bit not in (0, 1):
        raise ValueError("observation/message bit must be 0 or 1")
    return BetaModel(model.alpha + bit, model.beta + 1 - bit)


_binom_cache: dict[int, list[int]] = {}


def _binomial_row(n: int) -> list[int]:
    row = _binom_cache.get(n)
    if row is None:
        row = [math.comb(n, j) for j in range(n + 1)]
        _binom_cache[n] = row
    return row


_log_fact = [0.0]


def _log_factorial(k: int) -> float:
    # cumulative sum of logs, kept bit-identical to the compiled kernel
    table = _log_fact
    while len(table) <= k:
        table.append(table[-1] + math.log(len(table)))
    return table[k]


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge for a={a}, b={b}")


def incbeta_half(a: int, b: int) -> float:
    """I_{1/2}(a, b) for integer a, b >= 1."""
    if a < 1 or b < 1:
        raise ValueError("a and b must be >= 1")
    n = a + b - 1
    if n <= EXACT_MAX_N:
        # P(Binomial(n, 1/2) >= a)
        tail = sum(_binomial_row(n)[a:])
        return math.ldexp(float(tail), -n)
    if a == b:
        return 0.5  # exact by symmetry; the continued fraction is off by ~1e-13 here
    front = math.exp(_log_factorial(n) - _log_factorial(a - 1) - _log_factorial(b - 1) - (a + b) * LN2)
    if b < a:
        return front * _beta_cf(float(a), float(b), 0.5) / a
    return 1.0 - front * _beta_cf(float(b), float(a), 0.5) / b


def belief(model: BetaModel) -> float:
    """P(f < 1/2) under the posterior: probability the floor is mostly non-vibrating."""
    return incbeta_half(model.alpha, model.beta)


def variance(model: BetaModel) -> float:
    a = float(model.alpha)
    b = float(model.beta)
    s = a + b
    return a * b / (s * s * (s + 1.0))


def try_decide(model: BetaModel, obs_count: int, d_f: int, o_c: int, p_c: float,
               strategy: str, p: float | None = None) -> int:
    """Apply the threshold decision once more than ``o_c`` updates were seen.

    A set decision is final for no/positive feedback; soft feedback keeps
    re-evaluating. ``p`` may be passed in to reuse an already computed belief.
    """
    if not (strategy == SOFT_FEEDBACK or d_f == UNDECIDED) or obs_count <= o_c:
        return d_f
    if p is None:
        p = belief(model)
    if p >= p_c:
        return 0
    if 1.0 - p >= p_c:
        return 1
    return d_f


def soft_weight(p: float, gamma_var: float, eta: float, kappa: float) -> float:
    return math.exp(-eta * gamma_var) * math.pow(abs(0.5 - p), kappa)


def construct_message(strategy: FeedbackStrategy | str, p: float, obs: int, d_f: int,
                      gamma_var: float, rng) -> int:
    """Bit broadcast after an observation.

    Soft feedback always consumes exactly one uniform draw from ``rng``; the
    other strategies never touch it.
    """
    if isinstance(strategy, str):
        strategy = FeedbackStrategy(strategy)
    if strategy.kind == NO_FEEDBACK:
        return obs
    if strategy.kind == POSITIVE_FEEDBACK:
        return d_f if d_f != UNDECIDED else obs
    delta = soft_weight(p, gamma_var, strategy.eta, strategy.kappa)
    q = delta * (1.0 - p) + (1.0 - delta) * obs
    return 1 if rng.random() < q else 0
