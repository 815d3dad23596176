"""Noise-resistant particle swarm optimisation and the soft-feedback grid search."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import agent, engine
from . import rng as rngmod
from .decision import NO_FEEDBACK, SOFT_FEEDBACK, UNDECIDED, FeedbackStrategy

TAG_PSO = 2
TAG_PSO_INIT = 3
TAG_PSO_MOVE = 4
DIM_NAMES = ("gamma0", "gamma", "tau", "theta_c", "o_c")
LOWER = (0.0, 0.0, 1000.0, 50.0, 0.0)
UPPER = (20000.0, 20000.0, 6000.0, 150.0, 500.0)

WRONG_PENALTY = 5.0

DEFAULT_ETAS = (750, 1000, 1250, 1500, 1750, 2000, 2250, 2500)
DEFAULT_KAPPAS = (1, 2, 3, 4)


def pso_environment(seed: int = 0) -> engine.SimConfig:
    """Five robots, no feedback, randomised 5 x 5 floors at f = 0.48."""
    return engine.SimConfig(seed=seed, swarm_size=5, grid=dict(engine.DEFAULT_GRID),
                            strategies=(FeedbackStrategy(NO_FEEDBACK),))


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 25
    n_iterations: int = 50
    w_p: float = 0.75
    w_g: float = 0.75
    inertia_start: float = 1.0
    inertia_end: float = 0.4
    n_evals: int = 10
    elite_fraction: float = 0.2
    elite_evals: int = 10
    lower: tuple[float, ...] = LOWER
    upper: tuple[float, ...] = UPPER
    seed: int = 0
    fitness_exponent: float = -1.0  # tile-count power in the estimate-error term
    sim: engine.SimConfig = field(default_factory=pso_environment)

    def __post_init__(self):
        for name in ("n_particles", "n_iterations", "n_evals"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.elite_evals < 0:
            raise ValueError("elite_evals must be >= 0")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in (0, 1]")
        if self.w_p < 0 or self.w_g < 0 or self.inertia_start < 0 or self.inertia_end < 0:
            raise ValueError("PSO weights must be non-negative")
        if len(self.lower) != len(self.upper) or any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("bounds must have equal length with lower <= upper")

    def inertia(self, k: int) -> float:
        if self.n_iterations == 1:
            return self.inertia_start
        return self.inertia_start + (self.inertia_end - self.inertia_start) * k / (self.n_iterations - 1)

    @property
    def n_elite(self) -> int:
        return max(1, int(math.ceil(self.elite_fraction * self.n_particles - 1e-9)))


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    evaluations: list[float] = field(default_factory=list)
    fitness: float = math.inf
    best_position: np.ndarray | None = None
    best_fitness: float = math.inf


def velocity_update(particle: Particle, g_best, inertia: float, rng, w_p: float = 0.75,
                    w_g: float = 0.75) -> np.ndarray:
    """Inertia plus randomly weighted pulls toward the personal and global bests."""
    p = particle.position
    p_b = particle.best_position if particle.best_position is not None else p
    r1 = rng.random(p.size)
    r2 = rng.random(p.size)
    return inertia * particle.velocity + w_p * r1 * (p_b - p) + w_g * r2 * (np.asarray(g_best) - p)


def clamp(position, lower, upper) -> np.ndarray:
    return np.minimum(np.maximum(position, np.asarray(lower, float)), np.asarray(upper, float))


def robot_fitness(f_est: float, f_true: float, d_f: int, d_star: int, t_decide: float, t_end: float,
                  n_tiles: int, exponent: float = -1.0) -> float:
    """Estimate error times decision error for one robot.

    ``exponent`` sets how the estimate error is scaled by the tile count:
    -1 divides by it, +1 multiplies by it.
    """
    eps_f = 1.0 + abs(f_est - f_true) * n_tiles ** exponent
    if d_f == UNDECIDED:
        eps_d = 1.0
    elif d_f == d_star:
        eps_d = t_decide / t_end
    else:
        eps_d = WRONG_PENALTY
    return eps_f * eps_d


def particle_fitness(evaluations) -> float:
    """Mean plus population standard deviation of the evaluations."""
    c = np.asarray(evaluations, dtype=float)
    if c.size == 0:
        raise ValueError("particle fitness needs at least one evaluation")
    return float(c.mean() + c.std())


def simulation_fitness(stats: engine.RunStats, kind: str, n_tiles: int, exponent: float = -1.0) -> float:
    d_star = 0 if stats.fill_ratio < 0.5 else 1
    total = 0.0
    for r in stats.for_strategy(kind):
        total += robot_fitness(r.f_est, stats.fill_ratio, r.final_decision, d_star, r.decision_time_s,
                               stats.t_end_s, n_tiles, exponent)
    return total


class SimulationObjective:
    """Fitness of one simulation for a parameter vector; picklable for worker processes."""

    def __init__(self, sim: engine.SimConfig, exponent: float = -1.0, backend: str | None = None):
        self.sim = sim
        self.exponent = exponent
        self.backend = backend

    def worst(self) -> float:
        n_tiles = self._n_tiles()
        return self.sim.swarm_size * WRONG_PENALTY * (1.0 + n_tiles ** self.exponent)

    def _n_tiles(self) -> int:
        g = self.sim.grid
        if "rows" in g:
            return int(g["rows"]) * int(g["cols"])
        return engine.build_grid(g, 0).n_tiles

    def __call__(self, position, seed: int) -> float:
        try:
            params = self.sim.robot.with_vector(position)
        except ValueError:
            return self.worst()  # e.g. gamma0 = gamma = 0 admits no walk duration
        cfg = replace(self.sim, robot=params, seed=seed, grid_seed=None, placement_seed=None)
        stats = engine.summarize(engine.run(cfg, self.backend))
        kind = self.sim.strategies[0].kind
        return simulation_fitness(stats, kind, self._n_tiles(), self.exponent)


def _evaluate(job):
    objective, position, seeds = job
    return [float(objective(position, s)) for s in seeds]


@dataclass
class PsoResult:
    best_position: np.ndarray
    best_fitness: float
    trace: list[dict]
    particles: list[Particle]

    def global_best_history(self) -> list[float]:
        seen = {}
        for row in self.trace:
            seen[row["iteration"]] = row["global_best"]
        return [seen[k] for k in sorted(seen)]

    def best_params(self, base: agent.RobotParams | None = None) -> agent.RobotParams:
        return (base or agent.P_STAR).with_vector(self.best_position)


def pso_run(config: PsoConfig, objective: Callable | None = None, workers: int = 1) -> PsoResult:
    """Minimise ``objective(position, seed)`` with the noise-resistant PSO.

    The trace has one row per particle per iteration holding its current
    fitness, mean evaluation, personal best, global best and position.
    """
    if objective is None:
        objective = SimulationObjective(config.sim, config.fitness_exponent)
    lo = np.asarray(config.lower, float)
    hi = np.asarray(config.upper, float)
    init = np.random.Generator(np.random.PCG64(rngmod.derived_seed(config.seed, TAG_PSO_INIT)))
    particles = [Particle(lo + (hi - lo) * init.random(lo.size), np.zeros(lo.size)) for _ in range(config.n_particles)]
    g_best = particles[0].position.copy()
    g_fit = math.inf
    trace = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def run_jobs(jobs):
        if pool is None:
            return [_evaluate(j) for j in jobs]
        return list(pool.map(_evaluate, jobs))

    try:
        for k in range(config.n_iterations):
            seeds = [[rngmod.derived_seed(config.seed, TAG_PSO, k, i, e) for e in range(config.n_evals)]
                     for i in range(config.n_particles)]
            results = run_jobs([(objective, p.position.copy(), s) for p, s in zip(particles, seeds)])
            provisional = []
            for p, evals in zip(particles, results):
                p.evaluations = evals
                provisional.append(particle_fitness(evals))
            elite = sorted(range(config.n_particles), key=lambda i: (provisional[i], i))[:config.n_elite]
            if config.elite_evals:
                extra_seeds = [[rngmod.derived_seed(config.seed, TAG_PSO, k, i, e)
                                for e in range(config.n_evals, config.n_evals + config.elite_evals)] for i in elite]
                extra = run_jobs([(objective, particles[i].position.copy(), s) for i, s in zip(elite, extra_seeds)])
                for i, evals in zip(elite, extra):
                    particles[i].evaluations = particles[i].evaluations + evals
            for p in particles:
                p.fitness = particle_fitness(p.evaluations)
                if p.fitness < p.best_fitness:
                    p.best_fitness = p.fitness
                    p.best_position = p.position.copy()
                if p.best_fitness < g_fit:
                    g_fit = p.best_fitness
                    g_best = p.best_position.copy()
            for i, p in enumerate(particles):
                trace.append({
                    "iteration": k,
                    "particle": i,
                    "fitness": p.fitness,
                    "mean_evaluation": float(np.mean(p.evaluations)),
                    "n_evaluations": len(p.evaluations),
                    "personal_best": p.best_fitness,
                    "global_best": g_fit,
                    **{name: float(v) for name, v in zip(DIM_NAMES, p.position)},
                })
            if k == config.n_iterations - 1:
                break
            w = config.inertia(k)
            move = np.random.Generator(np.random.PCG64(rngmod.derived_seed(config.seed, TAG_PSO_MOVE, k)))
            for p in particles:
                p.velocity = velocity_update(p, g_best, w, move, config.w_p, config.w_g)
                p.position = clamp(p.position + p.velocity, lo, hi)
    finally:
        if pool is not None:
            pool.shutdown()
    return PsoResult(g_best, g_fit, trace, particles)


def sphere(center, lower=LOWER, upper=UPPER) -> Callable:
    """Noiseless bowl with minimum 1 at ``center``, scaled per dimension by the bound width."""
    c = np.asarray(center, float)
    span = np.asarray(upper, float) - np.asarray(lower, float)

    def f(x, seed=None) -> float:
        z = (np.asarray(x, float) - c) / span
        return 1.0 + float(np.dot(z, z))

    return f


def grid_search(eta_set, kappa_set, n_replicates: int, base: engine.SimConfig, include_baseline: bool = True,
                workers: int = 1, backend: str | None = None) -> list[dict]:
    """Soft-feedback sweep over (eta, kappa).

    Every cell reuses the same replicate seeds, so cells differ only through
    the strategy parameters. An optional no-feedback row has eta = kappa = None.
    """
    etas = list(eta_set)
    kappas = list(kappa_set)
    if not etas or not kappas:
        raise ValueError("eta and kappa sets must be non-empty")
    cells = [(None, None)] if include_baseline else []
    cells += [(eta, kappa) for eta in etas for kappa in kappas]
    rows = []
    for eta, kappa in cells:
        strat = FeedbackStrategy(NO_FEEDBACK) if eta is None else FeedbackStrategy(SOFT_FEEDBACK, float(eta), float(kappa))
        res = engine.batch(replace(base, strategies=(strat,)), n_replicates, workers=workers, backend=backend)
        agg = res.summary()[strat.kind]
        rows.append({
            "strategy": strat.kind,
            "eta": eta,
            "kappa": kappa,
            "decision_time_s": agg["decision_time_s"][0],
            "decision_time_se": agg["decision_time_s"][1],
            "accuracy": agg["accuracy"][0],
            "accuracy_se": agg["accuracy"][1],
            "undecided_fraction": agg["undecided_fraction"][0],
            "decision_times": res.per_replicate("mean_decision_time", strat.kind).tolist(),
            "accuracies": res.per_replicate("accuracy", strat.kind).tolist(),
        })
    return rows
