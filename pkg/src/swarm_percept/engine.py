"""Run configuration, the simulation driver, statistics and batch execution."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, agent, env, kernel
from . import rng as rngmod
from .agent import NoiseModel, RobotParams
from .decision import STRATEGY_KINDS, UNDECIDED, FeedbackStrategy
from .network import NetworkConfig
from .sensing import SensorConfig
from .world import World

TAG_BATCH = 1
MAX_DT_MS = 100.0
PLACEMENT_TRIES = 10000
RANDOMIZABLE = ("grid", "placement")
PRESETS = {"P*": agent.P_STAR, "P0": agent.P_ZERO}

DEFAULT_GRID = {"kind": "random", "rows": 5, "cols": 5, "f": 0.48, "tile_size_mm": 200.0}

CSV_COLUMNS = ("replicate", "robot_id", "strategy", "decision_time_s", "correct", "ca_time_per_sample_s",
               "intersample_mm", "loss_measured", "decided", "f_est")

EVENT_FIELDS = {
    "init": ("x", "y", "heading", "m_d", "s_d"),
    "state": ("from", "to", "cause"),
    "obs": ("x", "y", "tile", "rms", "O", "odometer"),
    "post": ("strategy", "alpha", "beta", "count"),
    "decide": ("strategy", "old", "new"),
    "msg": ("strategy", "bit", "delivered", "dropped"),
    "recv": ("strategy", "ones", "zeros"),
    "final": ("strategy", "alpha", "beta", "count", "d_f", "first_decision_us", "pending"),
    "robot": ("t_walk_us", "t_turn_us", "t_ca_us", "t_observe_us", "odometer", "n_obs"),
    "end": ("reason",),
}


def _from_fields(cls, data: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{what}: unknown fields {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**kwargs)


def _check_grid_spec(spec: dict) -> None:
    if not isinstance(spec, dict):
        raise ValueError("grid must be an object")
    if "path" in spec or "tiles" in spec:
        return
    kind = spec.get("kind")
    if kind != "random" and kind not in env.PATTERN_KINDS:
        raise ValueError(f"grid kind must be 'random' or one of {env.PATTERN_KINDS}, got {kind!r}")
    for key in ("rows", "cols", "f"):
        if key not in spec:
            raise ValueError(f"grid generator missing {key!r}")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    t_end_ms: float = 1_200_000.0
    dt_ms: float = 50.0
    swarm_size: int = 5
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    robot: RobotParams = agent.P_STAR
    noise: NoiseModel = NoiseModel()
    sensor: SensorConfig = SensorConfig()
    network: NetworkConfig = NetworkConfig()
    strategies: tuple[FeedbackStrategy, ...] = (FeedbackStrategy(),)
    replicates: int = 1
    randomize: tuple[str, ...] = RANDOMIZABLE
    # fixed seeds for grid / placement; None means "use seed"
    grid_seed: int | None = None
    placement_seed: int | None = None

    def __post_init__(self):
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")
        if not 0 < self.dt_ms <= MAX_DT_MS:
            raise ValueError(f"dt_ms must lie in (0, {MAX_DT_MS}]")
        if self.t_end_ms <= 0:
            raise ValueError("t_end_ms must be positive")
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 1 <= len(self.strategies) <= len(STRATEGY_KINDS):
            raise ValueError("between one and three strategies may run concurrently")
        kinds = [s.kind for s in self.strategies]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each strategy kind may appear once per run")
        bad = set(self.randomize) - set(RANDOMIZABLE)
        if bad:
            raise ValueError(f"randomize entries must be among {RANDOMIZABLE}, got {sorted(bad)}")
        _check_grid_spec(self.grid)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        kw = {}
        robot = d.pop("robot", None)
        preset = d.pop("preset", None)
        base = agent.P_STAR
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
            base = PRESETS[preset]
        if robot is not None:
            unknown = set(robot) - {f.name for f in fields(RobotParams)}
            if unknown:
                raise ValueError(f"robot: unknown fields {sorted(unknown)}")
            base = replace(base, **robot)
        kw["robot"] = base
        if "noise" in d:
            kw["noise"] = _from_fields(NoiseModel, d.pop("noise"), "noise")
        if "sensor" in d:
            kw["sensor"] = _from_fields(SensorConfig, d.pop("sensor"), "sensor")
        if "network" in d:
            kw["network"] = _from_fields(NetworkConfig, d.pop("network"), "network")
        if "strategies" in d:
            strategies = []
            for s in d.pop("strategies"):
                strategies.append(FeedbackStrategy(s) if isinstance(s, str) else _from_fields(FeedbackStrategy, s, "strategy"))
            kw["strategies"] = tuple(strategies)
        if "randomize" in d:
            kw["randomize"] = tuple(d.pop("randomize"))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"config: unknown fields {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = [asdict(s) for s in self.strategies]
        d["randomize"] = list(self.randomize)
        return d

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def t_end_us(self) -> int:
        return int(round(self.t_end_ms * 1000.0))

    @property
    def dt_us(self) -> int:
        return int(round(self.dt_ms * 1000.0))


def build_grid(spec: dict, seed: int) -> env.TileGrid:
    if "path" in spec:
        return env.TileGrid.load(spec["path"])
    if "tiles" in spec:
        return env.TileGrid.from_dict(spec)
    kind = spec["kind"]
    rows, cols, f = int(spec["rows"]), int(spec["cols"]), float(spec["f"])
    if kind == "random":
        return env.gen_random(rows, cols, f, rngmod.global_rng(seed, "grid"),
                              float(spec.get("tile_size_mm", 200.0)))
    return env.gen_pattern(kind, rows, cols, f, float(spec.get("tile_size_mm", 100.0)))


def place_robots(grid: env.TileGrid, n: int, rng, radius: float = agent.BODY_RADIUS_MM) -> list[tuple[float, float, float]]:
    """Uniform non-overlapping poses; raises when the arena cannot hold ``n`` bodies."""
    lo_x, hi_x = radius, grid.arena_width - radius
    lo_y, hi_y = radius, grid.arena_height - radius
    if hi_x < lo_x or hi_y < lo_y:
        raise ValueError("arena is smaller than one robot body")
    min_d2 = (2.0 * radius) ** 2
    poses: list[tuple[float, float, float]] = []
    for _ in range(n):
        for _ in range(PLACEMENT_TRIES):
            x = lo_x + (hi_x - lo_x) * rng.random()
            y = lo_y + (hi_y - lo_y) * rng.random()
            if all((x - px) ** 2 + (y - py) ** 2 >= min_d2 for px, py, _ in poses):
                break
        else:
            raise ValueError(f"cannot place {n} robots without overlap in a "
                             f"{grid.arena_width:g} x {grid.arena_height:g} mm arena")
        poses.append((x, y, -math.pi + 2.0 * math.pi * rng.random()))
    return poses


def build_world(config: SimConfig) -> World:
    seed = int(config.seed)
    grid_seed = seed if config.grid_seed is None else int(config.grid_seed)
    placement_seed = seed if config.placement_seed is None else int(config.placement_seed)
    grid = build_grid(config.grid, grid_seed)
    if 2 * grid.n_vibrating == grid.n_tiles:
        raise ValueError("fill ratio 0.5 has no correct decision")
    poses = place_robots(grid, config.swarm_size, rngmod.global_rng(placement_seed, "placement"))
    noises = tuple(config.noise.draw(rngmod.robot_rng(seed, i, "act")) for i in range(config.swarm_size))
    return World(grid, config.robot, config.sensor, tuple(config.strategies), config.network.loss_prob,
                 config.t_end_us, config.dt_us, seed, tuple(poses), noises)


@dataclass
class RunLog:
    world: World
    events: list[tuple]
    backend: str = "python"

    def of_kind(self, kind: str) -> list[tuple]:
        return [e for e in self.events if e[0] == kind]

    def iter_dicts(self):
        for e in self.events:
            d = {"type": e[0], "t_us": e[1], "robot": e[2]}
            d.update(zip(EVENT_FIELDS[e[0]], e[3:]))
            yield d

    def to_ndjson(self) -> str:
        return "".join(json.dumps(d, separators=(",", ":")) + "\n" for d in self.iter_dicts())


def run(config: SimConfig, backend: str | None = None) -> RunLog:
    world = build_world(config)
    name = kernel.resolve(backend)
    return RunLog(world, kernel.run_kernel(world, name), name)


@dataclass(frozen=True)
class RobotStats:
    robot_id: int
    strategy: str
    decision_time_s: float  # t_end when undecided
    decided: bool
    correct: bool
    final_decision: int
    ca_time_per_sample_s: float
    intersample_mm: float
    f_est: float
    alpha: int
    beta: int


@dataclass(frozen=True)
class RunStats:
    robots: tuple[RobotStats, ...]
    loss_measured: dict
    t_end_s: float
    end_time_s: float
    end_reason: str
    fill_ratio: float

    def for_strategy(self, kind: str) -> list[RobotStats]:
        return [r for r in self.robots if r.strategy == kind]

    def accuracy(self, kind: str) -> float:
        rows = self.for_strategy(kind)
        return sum(r.correct for r in rows) / len(rows)

    def mean_decision_time(self, kind: str) -> float:
        """Mean over robots that decided; NaN when none did."""
        times = [r.decision_time_s for r in self.for_strategy(kind) if r.decided]
        return sum(times) / len(times) if times else math.nan

    def mean_decision_time_all(self, kind: str) -> float:
        rows = self.for_strategy(kind)
        return sum(r.decision_time_s for r in rows) / len(rows)

    def undecided_fraction(self, kind: str) -> float:
        rows = self.for_strategy(kind)
        return sum(not r.decided for r in rows) / len(rows)

    def mean_ca_time(self, kind: str) -> float:
        return _nanmean([r.ca_time_per_sample_s for r in self.for_strategy(kind)])

    def mean_intersample(self, kind: str) -> float:
        return _nanmean([r.intersample_mm for r in self.for_strategy(kind)])


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def summarize(log: RunLog) -> RunStats:
    world = log.world
    t_end_s = world.t_end_us / 1e6
    target = world.target_decision
    odo: dict[int, list[float]] = {}
    sent: dict[str, list[int]] = {}
    finals = []
    movement = {}
    end = None
    for e in log.events:
        kind = e[0]
        if kind == "obs":
            odo.setdefault(e[2], []).append(e[8])
        elif kind == "msg":
            acc = sent.setdefault(e[3], [0, 0])
            acc[0] += e[5]
            acc[1] += e[6]
        elif kind == "final":
            finals.append(e)
        elif kind == "robot":
            movement[e[2]] = e
        elif kind == "end":
            end = e
    rows = []
    for e in finals:
        _, _, i, strat, alpha, beta, _, d_f, first_us, _ = e
        m = movement[i]
        n_obs = m[8]
        marks = odo.get(i, [])
        gaps = [b - a for a, b in zip(marks, marks[1:])]
        rows.append(RobotStats(
            robot_id=i,
            strategy=strat,
            decision_time_s=first_us / 1e6 if first_us >= 0 else t_end_s,
            decided=first_us >= 0,
            correct=d_f == target,
            final_decision=d_f,
            ca_time_per_sample_s=m[5] / 1e6 / n_obs if n_obs else math.nan,
            intersample_mm=sum(gaps) / len(gaps) if gaps else math.nan,
            f_est=alpha / (alpha + beta),
            alpha=alpha,
            beta=beta,
        ))
    loss = {}
    for s in world.strategies:
        delivered, dropped = sent.get(s.kind, (0, 0))
        total = delivered + dropped
        loss[s.kind] = dropped / total if total else math.nan
    return RunStats(tuple(rows), loss, t_end_s, end[1] / 1e6, end[3], world.grid.fill_ratio)


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size == 0:
        raise ValueError("cosine similarity needs two non-empty sequences of equal length")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.dot(x, y)) / (nx * ny)


def replicate_config(config: SimConfig, index: int, randomize=None, tag: int = TAG_BATCH) -> SimConfig:
    """Config of replicate ``index``: fresh streams, grid and placement re-drawn if randomized."""
    randomize = config.randomize if randomize is None else tuple(randomize)
    bad = set(randomize) - set(RANDOMIZABLE)
    if bad:
        raise ValueError(f"randomize entries must be among {RANDOMIZABLE}, got {sorted(bad)}")
    def fixed(explicit, name):
        if explicit is not None:
            return explicit
        return None if name in randomize else config.seed

    return replace(
        config,
        seed=rngmod.derived_seed(config.seed, tag, index),
        replicates=1,
        grid_seed=fixed(config.grid_seed, "grid"),
        placement_seed=fixed(config.placement_seed, "placement"),
    )


def _run_replicate(args) -> tuple[RunStats, str | None]:
    config, backend, keep_log = args
    log = run(config, backend)
    return summarize(log), (log.to_ndjson() if keep_log else None)


@dataclass
class BatchResult:
    config: SimConfig
    replicates: list[RunStats]
    runlogs: list[str] | None = None

    def strategies(self) -> list[str]:
        return [s.kind for s in self.config.strategies]

    def per_replicate(self, metric: str, kind: str) -> np.ndarray:
        return np.array([getattr(r, metric)(kind) for r in self.replicates], dtype=float)

    def aggregate(self, metric: str, kind: str) -> tuple[float, float]:
        """Mean and standard error across replicates, ignoring NaN replicates."""
        vals = self.per_replicate(metric, kind)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            return math.nan, math.nan
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        return float(vals.mean()), se

    def summary(self) -> dict:
        out = {}
        for kind in self.strategies():
            out[kind] = {
                "decision_time_s": self.aggregate("mean_decision_time", kind),
                "decision_time_all_s": self.aggregate("mean_decision_time_all", kind),
                "accuracy": self.aggregate("accuracy", kind),
                "undecided_fraction": self.aggregate("undecided_fraction", kind),
                "ca_time_per_sample_s": self.aggregate("mean_ca_time", kind),
                "intersample_mm": self.aggregate("mean_intersample", kind),
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# swarm_percept {__version__} config_sha256={self.config.sha256()} seed={self.config.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep, stats in enumerate(self.replicates):
            for r in stats.robots:
                w.writerow([rep, r.robot_id, r.strategy, repr(r.decision_time_s), int(r.correct),
                            repr(r.ca_time_per_sample_s), repr(r.intersample_mm),
                            repr(stats.loss_measured[r.strategy]), int(r.decided), repr(r.f_est)])
        return buf.getvalue()


def batch(config: SimConfig, n_replicates: int | None = None, randomize=None, workers: int = 1,
          backend: str | None = None, keep_logs: bool = False, tag: int = TAG_BATCH) -> BatchResult:
    n = config.replicates if n_replicates is None else int(n_replicates)
    if n < 1:
        raise ValueError("n_replicates must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = [(replicate_config(config, r, randomize, tag), backend, keep_logs) for r in range(n)]
    if workers == 1:
        results = [_run_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, jobs))
    stats = [r[0] for r in results]
    logs = [r[1] for r in results] if keep_logs else None
    return BatchResult(config, stats, logs)
