import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarm_percept import decision
from swarm_percept.decision import (NO_FEEDBACK, POSITIVE_FEEDBACK, SOFT_FEEDBACK, UNDECIDED, BetaModel,
                                    FeedbackStrategy)

counts = st.integers(1, 600)


def belief_oracle(a: int, b: int) -> float:
    """P(Binomial(a + b - 1, 1/2) >= a) in exact rationals."""
    n = a + b - 1
    tail = sum(math.comb(n, j) for j in range(a, n + 1))
    return float(Fraction(tail, 2**n))


def test_update_examples():
    assert decision.update(BetaModel(), 1) == BetaModel(2, 1)
    assert decision.update(BetaModel(), 0) == BetaModel(1, 2)
    m = BetaModel()
    for bit in [1] * 300 + [0] * 100:
        m = decision.update(m, bit)
    assert m == BetaModel(301, 101)
    with pytest.raises(ValueError):
        decision.update(m, 2)


@given(st.lists(st.integers(0, 1), max_size=60), st.randoms())
def test_update_commutes(bits, rnd):
    def fold(seq):
        m = BetaModel()
        for b in seq:
            m = decision.update(m, b)
        return m

    shuffled = list(bits)
    rnd.shuffle(shuffled)
    assert fold(bits) == fold(shuffled)


def test_belief_examples():
    assert decision.belief(BetaModel(1, 1)) == 0.5
    assert decision.belief(BetaModel(2, 1)) == 0.25
    assert decision.belief(BetaModel(381, 401)) == pytest.approx(belief_oracle(381, 401), abs=1e-9)


def test_belief_exact_and_continued_fraction_agree():
    # the two evaluation paths meet at alpha + beta - 1 == 64
    for a in range(1, 64):
        b = 65 - a
        cf_front = math.exp(decision._log_factorial(64) - decision._log_factorial(a - 1)
                            - decision._log_factorial(b - 1) - (a + b) * decision.LN2)
        if b < a:
            cf = cf_front * decision._beta_cf(a, b, 0.5) / a
        else:
            cf = 1.0 - cf_front * decision._beta_cf(b, a, 0.5) / b
        assert cf == pytest.approx(decision.incbeta_half(a, b), abs=1e-12)


def test_belief_random_large_pairs():
    rnd = random.Random(7)
    for _ in range(100):
        a = rnd.randint(1, 1500)
        b = rnd.randint(1, 2000 - a)
        assert decision.belief(BetaModel(a, b)) == pytest.approx(belief_oracle(a, b), abs=1e-9)


@given(counts, counts)
def test_belief_symmetry(a, b):
    s = decision.belief(BetaModel(a, b)) + decision.belief(BetaModel(b, a))
    assert abs(s - 1.0) <= 1e-12


@given(st.integers(1, 150), st.integers(1, 150))
def test_belief_strictly_monotone(a, b):
    # strict wherever float64 can tell the neighbours apart, weak where p saturates
    p = decision.belief(BetaModel(a, b))
    lower = decision.belief(BetaModel(a + 1, b))
    higher = decision.belief(BetaModel(a, b + 1))
    assert lower <= p <= higher
    if belief_oracle(a, b) - belief_oracle(a + 1, b) > 1e-15:
        assert lower < p
    if belief_oracle(a, b + 1) - belief_oracle(a, b) > 1e-15:
        assert higher > p


def test_variance_examples():
    assert decision.variance(BetaModel()) == pytest.approx(1 / 12)
    assert decision.variance(BetaModel(2, 1)) == pytest.approx(2 / 36)
    for a in (1, 10, 1000):
        assert decision.variance(BetaModel(a, a)) == pytest.approx(1 / (4 * (2 * a + 1)))


def test_try_decide_examples():
    m = BetaModel(1, 1)
    assert decision.try_decide(m, 400, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.95) == 0
    assert decision.try_decide(m, 300, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.999) == UNDECIDED
    assert decision.try_decide(m, 400, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.6) == UNDECIDED
    assert decision.try_decide(m, 400, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.05) == 1
    # the gate needs strictly more than O_c updates
    assert decision.try_decide(m, 381, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.99) == UNDECIDED
    assert decision.try_decide(m, 400, UNDECIDED, 381, 0.9, NO_FEEDBACK, p=0.9) == 0


@given(st.sampled_from([NO_FEEDBACK, POSITIVE_FEEDBACK]), st.sampled_from([0, 1]), st.floats(0, 1),
       st.integers(0, 2000))
def test_committed_decision_is_final(kind, d_f, p, n):
    assert decision.try_decide(BetaModel(), n, d_f, 0, 0.9, kind, p=p) == d_f


def test_soft_feedback_may_revise():
    assert decision.try_decide(BetaModel(), 10, 1, 0, 0.9, SOFT_FEEDBACK, p=0.95) == 0


def test_construct_message_rules():
    rng = np.random.default_rng(0)
    assert decision.construct_message(NO_FEEDBACK, 0.99, 1, 0, 0.0, None) == 1
    assert decision.construct_message(POSITIVE_FEEDBACK, 0.5, 0, 1, 0.0, None) == 1
    assert decision.construct_message(POSITIVE_FEEDBACK, 0.5, 0, UNDECIDED, 0.0, None) == 0
    soft = FeedbackStrategy(SOFT_FEEDBACK, 1500, 2)
    for obs in (0, 1):
        assert all(decision.construct_message(soft, 0.5, obs, UNDECIDED, 0.0, rng) == obs for _ in range(200))
        assert all(decision.construct_message(soft, 0.0, obs, UNDECIDED, 1 / 12, rng) == obs for _ in range(200))


def test_soft_weight_anchor():
    assert decision.soft_weight(0.0, 0.0, 1500, 2) == 0.25
    rng = np.random.default_rng(3)
    soft = FeedbackStrategy(SOFT_FEEDBACK, 1500, 2)
    ones = np.mean([decision.construct_message(soft, 0.0, 0, UNDECIDED, 0.0, rng) for _ in range(40_000)])
    assert abs(ones - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 40_000)
    assert all(decision.construct_message(soft, 0.0, 1, UNDECIDED, 0.0, rng) == 1 for _ in range(200))


@given(st.floats(0, 1), st.floats(0, 0.25), st.floats(1e-3, 1e4), st.floats(0.1, 8))
def test_soft_weight_bounded(p, g, eta, kappa):
    d = decision.soft_weight(p, g, eta, kappa)
    assert 0.0 <= d <= 0.5**kappa + 1e-15


def test_soft_feedback_limit_equals_no_feedback():
    soft = FeedbackStrategy(SOFT_FEEDBACK, 1e6, 2)
    rng = np.random.default_rng(5)
    for a, b in ((400, 10), (10, 400), (50, 60)):
        m = BetaModel(a, b)
        p, g = decision.belief(m), decision.variance(m)
        for obs in (0, 1):
            assert all(decision.construct_message(soft, p, obs, UNDECIDED, g, rng) == obs for _ in range(100))


def test_strategy_validation():
    with pytest.raises(ValueError):
        FeedbackStrategy("gossip")
    with pytest.raises(ValueError):
        FeedbackStrategy(SOFT_FEEDBACK, eta=0.0)
