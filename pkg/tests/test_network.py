import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarm_percept import network
from swarm_percept.decision import BetaModel
from swarm_percept.network import Inbox, Message, NetworkConfig


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(1.5)
    with pytest.raises(ValueError):
        Message(0, 3)


def test_broadcast_certain_outcomes():
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert network.broadcast(0, Message(0, 1), range(1, 10), 0.0, rng) == list(range(1, 10))
    assert network.broadcast(0, Message(0, 1), range(1, 10), 1.0, rng) == []
    assert rng.bit_generator.state == state  # no draws consumed


def test_broadcast_rejects_self():
    with pytest.raises(ValueError):
        network.broadcast(2, Message(2, 0), [1, 2, 3], 0.1, np.random.default_rng(0))


def test_broadcast_empirical_loss():
    rng = np.random.default_rng(1)
    recipients = list(range(1, 10))
    delivered = 0
    n = 100_000
    for _ in range(n):
        delivered += len(network.broadcast(0, Message(0, 1), recipients, 0.075, rng))
    total = n * len(recipients)
    loss = 1 - delivered / total
    assert abs(loss - 0.075) <= 0.003


@given(st.floats(0, 1), st.integers(0, 12), st.integers(0, 2**32))
def test_delivered_subset_and_accounting(rho, n, seed):
    recipients = list(range(1, n + 1))
    got = network.broadcast(0, Message(0, 1), recipients, rho, np.random.default_rng(seed))
    assert set(got) <= set(recipients)
    assert got == sorted(got)
    dropped = len(recipients) - len(got)
    assert len(got) + dropped == len(recipients)


def test_drain_inbox_example():
    box = Inbox(1)
    for b in (1, 0, 1):
        box.push(0, b)
    model, count, bits = network.drain_inbox(box, 0, BetaModel(), 7)
    assert model == BetaModel(3, 2)
    assert count == 10
    assert bits == [1, 0, 1]
    assert box.pending() == 0


def test_drain_empty_inbox():
    box = Inbox(2)
    model, count, bits = network.drain_inbox(box, 1, BetaModel(4, 5), 3)
    assert (model, count, bits) == (BetaModel(4, 5), 3, [])


def test_inbox_queues_per_strategy():
    box = Inbox(3)
    box.push(0, 1)
    box.push(2, 0)
    box.push(2, 1)
    assert (box.pending(0), box.pending(1), box.pending(2), box.pending()) == (1, 0, 2, 3)
    network.drain_inbox(box, 2, BetaModel(), 0)
    assert box.pending() == 1


@given(st.lists(st.integers(0, 1), max_size=40), st.randoms())
def test_drain_order_irrelevant(bits, rnd):
    a, b = Inbox(1), Inbox(1)
    shuffled = list(bits)
    rnd.shuffle(shuffled)
    for x in bits:
        a.push(0, x)
    for x in shuffled:
        b.push(0, x)
    assert network.drain_inbox(a, 0, BetaModel(), 0)[:2] == network.drain_inbox(b, 0, BetaModel(), 0)[:2]


def test_loss_binomial_spread():
    # per-message drop counts follow Binomial(9, rho)
    rng = np.random.default_rng(4)
    drops = [9 - len(network.broadcast(0, Message(0, 0), range(1, 10), 0.3, rng)) for _ in range(20_000)]
    assert abs(np.var(drops) - 9 * 0.3 * 0.7) < 0.1
    assert abs(np.mean(drops) - 2.7) < 4 * math.sqrt(9 * 0.21 / 20_000)
