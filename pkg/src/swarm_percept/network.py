"""All-to-all broadcast with i.i.d. per-recipient loss, and per-robot inboxes."""
from __future__ import annotations

from dataclasses import dataclass, field

from .decision import BetaModel, update


@dataclass(frozen=True)
class NetworkConfig:
    loss_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Message:
    sender: int
    bit: int
    strategy: str = ""

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError("message bit must be 0 or 1")


def broadcast(sender: int, message: Message, recipients, loss_prob: float, rng) -> list[int]:
    """Recipients that receive ``message``; each drop is independent with probability ``loss_prob``.

    No random numbers are consumed when the outcome is certain (loss 0 or 1).
    """
    if sender in recipients:
        raise ValueError("sender cannot be among its own recipients")
    if loss_prob <= 0.0:
        return list(recipients)
    if loss_prob >= 1.0:
        return []
    return [r for r in recipients if not rng.random() < loss_prob]


@dataclass
class Inbox:
    """Bits waiting for one robot, one list per concurrently running strategy."""

    n_strategies: int = 1
    bits: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.bits:
            self.bits = [[] for _ in range(self.n_strategies)]

    def push(self, strategy: int, bit: int) -> None:
        self.bits[strategy].append(bit)

    def pending(self, strategy: int | None = None) -> int:
        if strategy is None:
            return sum(len(b) for b in self.bits)
        return len(self.bits[strategy])


def drain_inbox(inbox: Inbox, strategy: int, model: BetaModel, obs_count: int) -> tuple[BetaModel, int, list[int]]:
    """Fold every waiting bit of one strategy into ``model``; empties that queue."""
    received = inbox.bits[strategy]
    inbox.bits[strategy] = []
    for bit in received:
        model = update(model, bit)
    return model, obs_count + len(received), received
