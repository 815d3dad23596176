"""Fully resolved input of one simulation run, shared by both kernel backends."""
from __future__ import annotations

from dataclasses import dataclass

from . import rng as rngmod
from .agent import ActuationNoise, RobotParams
from .decision import FeedbackStrategy
from .env import TileGrid
from .sensing import SensorConfig


@dataclass(frozen=True)
class World:
    grid: TileGrid
    params: RobotParams
    sensor: SensorConfig
    strategies: tuple[FeedbackStrategy, ...]
    loss_prob: float
    t_end_us: int
    dt_us: int
    seed: int
    poses: tuple[tuple[float, float, float], ...]
    noises: tuple[ActuationNoise, ...]

    @property
    def n_robots(self) -> int:
        return len(self.poses)

    @property
    def tau_us(self) -> int:
        return int(round(self.params.tau * 1000.0))

    @property
    def observe_us(self) -> int:
        return int(round(self.sensor.duration_ms * 1000.0))

    @property
    def target_decision(self) -> int:
        return 0 if self.grid.fill_ratio < 0.5 else 1

    def streams(self) -> list[dict]:
        """Fresh per-robot generators for everything the kernel draws."""
        return [{name: rngmod.robot_rng(self.seed, i, name) for name in rngmod.KERNEL_STREAMS}
                for i in range(self.n_robots)]
