import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarm_percept import agent, env
from swarm_percept import rng as rngmod
from swarm_percept.agent import ActuationNoise, FsmContext, NoiseModel, RobotParams, RobotState
from swarm_percept.sensing import SensorConfig

QUIET = ActuationNoise(0.0, 1.0, 0.0)


class FixedUniform:
    """Stand-in generator whose uniform draws come from a list."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def make(params=RobotParams(), grid=None, pose=(500.0, 500.0, 0.0), noise=QUIET, seed=0, t_end_s=1200.0):
    grid = grid or env.TileGrid.from_array(np.zeros((5, 5), int), 200.0)
    robot = RobotState(0, *pose, noise, rngmod.robot_rng(seed, 0, "walk"), rngmod.robot_rng(seed, 0, "turn"),
                       rngmod.robot_rng(seed, 0, "sense"))
    ctx = FsmContext(grid, params, SensorConfig(), int(t_end_s * 1e6), int(round(params.tau * 1000)), 1_000_000)
    agent.start_walk(robot, ctx)
    return robot, ctx


def simulate(robot, ctx, seconds, dt_us=50_000, others=()):
    events = []
    t = 0
    end = int(seconds * 1e6)
    while t < end:
        step = min(dt_us, end - t)
        events += agent.fsm_step(robot, ctx, t, step, list(others))
        t += step
    return events


def test_params_validation():
    with pytest.raises(ValueError):
        RobotParams(gamma=-1)
    with pytest.raises(ValueError):
        RobotParams(gamma0=0, gamma=0)
    with pytest.raises(ValueError):
        RobotParams(p_c=0.5)
    with pytest.raises(ValueError):
        RobotParams(tau_reset="middle")
    p = agent.P_STAR.with_vector([1.0, 2.0, 3000.0, 54.6, 380.5])
    assert p.theta_c == 55.0 and p.o_c == 380 and isinstance(p.o_c, int)
    assert agent.P_STAR.as_vector() == (7860.0, 10725.0, 3778.0, 55.0, 381.0)


def test_walk_duration_degenerate():
    rng = np.random.default_rng(0)
    assert all(agent.draw_walk_duration(7500, 0, rng) == 7500 for _ in range(10))
    with pytest.raises(ValueError):
        agent.draw_walk_duration(0, 0, rng)
    with pytest.raises(ValueError):
        agent.draw_walk_duration(-5, 0, rng)


def truncated_cauchy_median(x0, g):
    # Cauchy restricted to (0, inf): F(m) = (C(m) - C(0)) / (1 - C(0)) = 1/2
    c0 = 0.5 + math.atan(-x0 / g) / math.pi
    target = 0.5 * (1.0 + c0)
    return x0 + g * math.tan(math.pi * (target - 0.5))


def test_walk_duration_median_oracle():
    rng = np.random.default_rng(1)
    draws = np.array([agent.draw_walk_duration(7860, 10725, rng) for _ in range(100_000)])
    assert (draws > 0).all()
    m = truncated_cauchy_median(7860, 10725)
    assert m > 7860
    # standard error of a sample median: 1 / (2 f(m) sqrt(n)) with the truncated density
    c0 = 0.5 + math.atan(-7860 / 10725) / math.pi
    dens = 1.0 / (math.pi * 10725 * (1 + ((m - 7860) / 10725) ** 2)) / (1 - c0)
    se = 1.0 / (2 * dens * math.sqrt(draws.size))
    assert abs(np.median(draws) - m) < 4 * se


@given(st.floats(-5e3, 2e4), st.floats(1, 2e4), st.integers(0, 2**32))
def test_walk_duration_positive(g0, g, seed):
    rng = np.random.default_rng(seed)
    assert all(0 < agent.draw_walk_duration(g0, g, rng) < math.inf for _ in range(20))


def test_turn_angle_examples():
    assert agent.draw_turn_angle(FixedUniform([0.25])) == (math.pi / 2, -1)
    assert agent.draw_turn_angle(FixedUniform([0.5])) == (0.0, 1)


def test_turn_angle_distribution():
    rng = np.random.default_rng(2)
    signed = np.array([a * d for a, d in (agent.draw_turn_angle(rng) for _ in range(100_000))])
    assert np.abs(signed).max() <= math.pi
    sigma = math.pi / math.sqrt(3)
    assert abs(signed.mean()) < 3 * sigma / math.sqrt(signed.size)
    hist, _ = np.histogram(np.abs(signed), bins=10, range=(0, math.pi))
    assert hist.min() > 0.9 * signed.size / 10


def test_battery_factor():
    assert agent.battery_factor(0, 100) == 1.0
    assert agent.battery_factor(100, 100) == 6 / 7
    assert agent.battery_factor(50, 100) == pytest.approx(13 / 14)
    with pytest.raises(ValueError):
        agent.battery_factor(-1, 100)
    with pytest.raises(ValueError):
        agent.battery_factor(101, 100)


@given(st.floats(0, 1), st.floats(0, 1))
def test_battery_monotone(a, b):
    lo, hi = sorted((a, b))
    assert agent.battery_factor(hi, 1.0) <= agent.battery_factor(lo, 1.0)


def test_wheel_speeds_examples():
    assert agent.wheel_speeds(80, ActuationNoise(0.0, 1.0), 0, 10) == (80, 80)
    vl, vr = agent.wheel_speeds(100, ActuationNoise(0.1, 1.0, 0.0), 0, 10)
    assert vl == pytest.approx(90) and vr == pytest.approx(100)
    vl, vr = agent.wheel_speeds(70, ActuationNoise(0.0, 1.0), 10, 10)
    assert vl == vr == pytest.approx(60)
    assert agent.wheel_speeds(100, ActuationNoise(0.1, 1.5, 0.0), 0, 10) == (100.0, 100.0)


def test_step_pose_examples():
    x, y, h = agent.step_pose(0, 0, 0, 100, 100, 1.0)
    assert (x, y, h) == (50.0, 0.0, 0.0)
    assert agent.step_pose(3, 4, 1, 0, 0, 2.0) == (3, 4, 1)
    x, y, h = agent.step_pose(3, 4, 0.0, -50, 50, 0.1)
    assert (x, y) == pytest.approx((3, 4))
    assert h == pytest.approx(0.25)  # 50 mm/s difference over 20 mm wheel base for 0.1 s


@given(st.floats(-3, 3), st.floats(0, 100), st.floats(0.01, 5))
def test_straight_segment(h, v, dt):
    x, y, h2 = agent.step_pose(0.0, 0.0, h, v, v, dt)
    assert h2 == pytest.approx(agent.wrap_angle(h))
    assert math.hypot(x, y) == pytest.approx(v * 0.5 * dt, abs=1e-9)
    # the point lies on the heading ray
    assert x * math.sin(h) - y * math.cos(h) == pytest.approx(0.0, abs=1e-9)


def test_detect_obstacle_examples():
    # centres 40 mm apart, dead ahead; edges 7 mm apart
    assert agent.detect_obstacle(500, 500, 0.0, [(540, 500)], 1000, 1000, 55)
    assert not agent.detect_obstacle(500, 500, 0.0, [(420, 500)], 1000, 1000, 55)
    assert not agent.detect_obstacle(500, 500, 0.3, [], 1000, 1000, 55)
    assert agent.detect_obstacle(950, 500, 0.0, [], 1000, 1000, 55)
    assert not agent.detect_obstacle(950, 500, math.pi, [], 1000, 1000, 55)


def test_noise_model_draws():
    rng = np.random.default_rng(3)
    draws = [NoiseModel().draw(rng) for _ in range(20_000)]
    m = np.array([d.m_d for d in draws])
    s = np.array([d.s_d for d in draws])
    assert m.min() >= -0.1 and m.max() < 0.1
    assert abs(s.mean() - (0.8 + 3.1 * 0.095)) < 0.01
    assert s.min() > 0.8
    assert NoiseModel(enabled=False).draw(rng) == QUIET


def test_noise_toggle_keeps_stream_alignment():
    a = np.random.default_rng(9)
    b = np.random.default_rng(9)
    NoiseModel().draw(a)
    NoiseModel(enabled=False).draw(b)
    assert a.random() == b.random()


@pytest.mark.parametrize("reset,extra", [("start", 0), ("end", 1_000_000)])
def test_observation_cadence(reset, extra):
    params = RobotParams(tau=3778.0, tau_reset=reset)
    robot, ctx = make(params, noise=ActuationNoise(0.05, 1.1))
    events = simulate(robot, ctx, 120)
    times = [e[1] for e in events if e[0] == "obs"]
    gaps = set(np.diff(times).tolist())
    assert gaps == {3_778_000 + extra}


def test_walled_in_robot_keeps_observing():
    grid = env.TileGrid.from_array(np.zeros((1, 1), int), 100.0)
    params = RobotParams(theta_c=150.0, tau=2000.0)
    robot, ctx = make(params, grid, pose=(50.0, 50.0, 0.3))
    events = simulate(robot, ctx, 60)
    causes = [e[5] for e in events if e[0] == "state"]
    assert "walk_end" not in causes
    assert causes.count("obstacle") > 10
    obs = [e[1] for e in events if e[0] == "obs"]
    assert set(np.diff(obs).tolist()) == {3_000_000}
    assert robot.time_walk == 0


def test_dt_refinement():
    grid = env.TileGrid.from_array(np.zeros((10, 10), int), 1000.0)
    finals = []
    for dt in (50_000, 25_000):
        robot, ctx = make(grid=grid, pose=(5000.0, 5000.0, 0.7), seed=4)
        simulate(robot, ctx, 60, dt)
        finals.append((robot.x, robot.y))
    assert math.dist(*finals) < 1.0


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.floats(-3.1, 3.1), st.sampled_from(["start", "end"]))
def test_fsm_invariants(seed, heading, reset):
    params = RobotParams(tau_reset=reset)
    noise = NoiseModel().draw(np.random.default_rng(seed))
    robot, ctx = make(params, pose=(120.0, 880.0, heading), noise=noise, seed=seed, t_end_s=90)
    end = 90_000_000
    t = 0
    while t < end:
        agent.fsm_step(robot, ctx, t, 50_000, [(500.0, 500.0)])
        t += 50_000
        r = agent.BODY_RADIUS_MM
        assert r <= robot.x <= 1000 - r and r <= robot.y <= 1000 - r
        assert -math.pi < robot.heading <= math.pi
    assert robot.time_walk + robot.time_turn + robot.time_observe == end
    assert robot.time_ca <= robot.time_turn
    assert robot.n_obs <= end / ctx.tau_us + 1
