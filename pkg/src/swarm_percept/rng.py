"""Seed derivation: one master seed fans out into independent named streams.

Every robot gets its own stream per subsystem, so consuming more draws in one
subsystem (say, network loss) never shifts the draws of another.
"""
from __future__ import annotations

import numpy as np

ROBOT_STREAMS = {"walk": 1, "turn": 2, "sense": 3, "msg": 4, "net": 5, "act": 6}
GLOBAL_STREAMS = {"placement": 1, "grid": 2}
KERNEL_STREAMS = ("walk", "turn", "sense", "msg", "net")

_REPLICATE_MARK = 0xFFFF


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return seed


def robot_rng(seed: int, robot: int, name: str) -> np.random.Generator:
    code = ROBOT_STREAMS[name]
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(robot + 1, code))
    return np.random.Generator(np.random.PCG64(ss))


def global_rng(seed: int, name: str) -> np.random.Generator:
    code = GLOBAL_STREAMS[name]
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(0, code))
    return np.random.Generator(np.random.PCG64(ss))


def derived_seed(seed: int, tag: int, *index: int) -> int:
    """A 64-bit seed for replicate ``index`` of purpose ``tag``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(_REPLICATE_MARK, tag, *index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
