"""Robot kinematics, actuation noise and the random-walk / turn / observe FSM.

Inside the FSM time is kept in integer microseconds so that the time spent in
each state adds up to the elapsed time exactly. Positions are millimetres and
headings radians in (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import env, sensing
from .decision import Opinion

RANDOM_WALK = 0
RANDOM_TURN = 1
OBSERVE = 2
STATE_NAMES = ("random_walk", "random_turn", "observe")

BODY_RADIUS_MM = 16.5  # 33 mm body length
CONE_HALF_ANGLE = 0.6719517620178169  # 38.5 degrees: 77 degree field of view
WHEEL_BASE_MM = 20.0
MM_PER_S_PER_UNIT = 0.5  # speed command 100 -> 50 mm/s
TURN_RATE = math.pi * 1e-6  # rad per microsecond, i.e. pi rad/s
WALK_CAP_US = 10**12  # caps heavy Cauchy tails; far longer than any run

PI = math.pi
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

TAU_RESET_END = "end"
TAU_RESET_START = "start"


@dataclass(frozen=True)
class RobotParams:
    gamma0: float = 7860.0  # ms, Cauchy location of forward-walk duration
    gamma: float = 10725.0  # ms, Cauchy scale
    tau: float = 3778.0  # ms between observations
    theta_c: float = 55.0  # mm obstacle range
    o_c: int = 381  # posterior updates required before deciding
    p_c: float = 0.9
    v_s: float = 90.0
    tau_reset: str = TAU_RESET_END

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.gamma == 0 and self.gamma0 <= 0:
            raise ValueError("gamma0 must be > 0 when gamma == 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.theta_c <= 0:
            raise ValueError("theta_c must be positive")
        if self.o_c < 0:
            raise ValueError("o_c must be >= 0")
        if not 0.5 < self.p_c < 1.0:
            raise ValueError("p_c must lie in (0.5, 1)")
        if not 0.0 <= self.v_s <= 100.0:
            raise ValueError("v_s must lie in [0, 100]")
        if self.tau_reset not in (TAU_RESET_END, TAU_RESET_START):
            raise ValueError(f"tau_reset must be {TAU_RESET_END!r} or {TAU_RESET_START!r}")

    def with_vector(self, vec) -> "RobotParams":
        """Parameters from an optimiser vector (gamma0, gamma, tau, theta_c, o_c)."""
        g0, g, tau, theta_c, o_c = (float(v) for v in vec)
        return RobotParams(g0, g, tau, float(round(theta_c)), int(round(o_c)), self.p_c, self.v_s, self.tau_reset)

    def as_vector(self) -> tuple[float, ...]:
        return (self.gamma0, self.gamma, self.tau, self.theta_c, float(self.o_c))


P_STAR = RobotParams(7860.0, 10725.0, 3778.0, 55.0, 381)
P_ZERO = RobotParams(7500.0, 15000.0, 2000.0, 50.0, 320)


@dataclass(frozen=True)
class ActuationNoise:
    """Per-robot actuation imperfection."""

    m_d: float = 0.0
    s_d: float = 1.0
    battery_horizon: float = 7.0  # <= 0 or inf disables battery decay

    def __post_init__(self):
        if self.s_d <= 0:
            raise ValueError("speed factor s_d must be positive")
        if not abs(self.m_d) < 1:
            raise ValueError("misalignment |m_d| must be < 1")


@dataclass(frozen=True)
class NoiseModel:
    """Distributions the per-robot :class:`ActuationNoise` is drawn from."""

    m_d_low: float = -0.1
    m_d_high: float = 0.1
    s_d_shape: float = 3.1
    s_d_scale: float = 0.095
    s_d_shift: float = 0.8
    battery_horizon: float = 7.0
    enabled: bool = True

    def draw(self, rng) -> ActuationNoise:
        # always consume the same draws so toggling noise keeps streams aligned
        u = rng.random()
        g = rng.standard_gamma(self.s_d_shape)
        if not self.enabled:
            return ActuationNoise(0.0, 1.0, 0.0)
        m_d = self.m_d_low + (self.m_d_high - self.m_d_low) * u
        s_d = self.s_d_shift + self.s_d_scale * g
        return ActuationNoise(m_d, s_d, self.battery_horizon)


def wrap_angle(a: float) -> float:
    while a > PI:
        a -= TWO_PI
    while a <= -PI:
        a += TWO_PI
    return a


def draw_walk_duration(gamma0: float, gamma: float, rng) -> float:
    """Forward-walk duration in ms from a Cauchy truncated to positive values."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        if gamma0 <= 0:
            raise ValueError("no positive walk duration possible with gamma0 <= 0 and gamma == 0")
        return gamma0
    while True:
        t = gamma0 + gamma * rng.standard_cauchy()
        if t > 0:
            return t


def walk_duration_us(t_ms: float) -> int:
    t = t_ms * 1000.0
    if t >= WALK_CAP_US:
        return WALK_CAP_US
    return int(math.ceil(t))


def draw_turn_angle(rng) -> tuple[float, int]:
    """Random turn: ``(|phi|, sign(phi))`` with phi ~ U(-pi, pi) and sign(0) = +1."""
    phi = -PI + TWO_PI * rng.random()
    return abs(phi), (1 if phi >= 0 else -1)


def turn_duration_us(angle: float) -> int:
    return int(math.ceil(angle / TURN_RATE))


def battery_factor(t: float, t_end: float, horizon: float = 7.0) -> float:
    if t < 0 or t > t_end:
        raise ValueError(f"battery time {t} outside [0, {t_end}]")
    if horizon <= 0 or math.isinf(horizon):
        return 1.0
    span = horizon * t_end
    return (span - t) / span  # one rounding, so t = t_end gives 6/7 exactly


def _clamp_speed(v: float) -> float:
    if v < 0.0:
        return 0.0
    if v > 100.0:
        return 100.0
    return v


def wheel_speeds(v_s: float, noise: ActuationNoise, t: float, t_end: float) -> tuple[float, float]:
    b = battery_factor(t, t_end, noise.battery_horizon)
    v_l = v_s * (1.0 - noise.m_d) * noise.s_d * b
    v_r = v_s * (1.0 + noise.m_d) * noise.s_d * b
    return _clamp_speed(v_l), _clamp_speed(v_r)


def step_pose(x: float, y: float, heading: float, v_l: float, v_r: float, dt: float,
              wheel_base: float = WHEEL_BASE_MM) -> tuple[float, float, float]:
    """Differential-drive pose after ``dt`` seconds at constant wheel commands.

    Integrates the arc exactly; no clipping to the arena.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sl = v_l * MM_PER_S_PER_UNIT
    sr = v_r * MM_PER_S_PER_UNIT
    v = 0.5 * (sl + sr)
    w = (sr - sl) / wheel_base
    if w == 0.0:
        x = x + v * dt * math.cos(heading)
        y = y + v * dt * math.sin(heading)
    else:
        h1 = heading + w * dt
        r = v / w
        x = x + r * (math.sin(h1) - math.sin(heading))
        y = y - r * (math.cos(h1) - math.cos(heading))
        heading = h1
    return x, y, wrap_angle(heading)


def clip_to_arena(x: float, y: float, width: float, height: float,
                  radius: float = BODY_RADIUS_MM) -> tuple[float, float]:
    if x < radius:
        x = radius
    elif x > width - radius:
        x = width - radius
    if y < radius:
        y = radius
    elif y > height - radius:
        y = height - radius
    return x, y


def detect_obstacle(x: float, y: float, heading: float, others, width: float, height: float,
                    theta_c: float, radius: float = BODY_RADIUS_MM,
                    cone: float = CONE_HALF_ANGLE) -> bool:
    """True when a wall or another robot is within ``theta_c`` of the body in the forward cone.

    Ranges are measured from the robot's own body edge; other robots are discs
    of the same radius.
    """
    for direction, dist in ((0.0, width - x), (PI, x), (HALF_PI, height - y), (-HALF_PI, y)):
        delta = abs(wrap_angle(direction - heading))
        if delta <= cone:
            ray = dist
        elif delta - cone < HALF_PI:
            ray = dist / math.cos(delta - cone)
        else:
            continue
        if ray - radius <= theta_c:
            return True
    for ox, oy in others:
        dx = ox - x
        dy = oy - y
        d = math.sqrt(dx * dx + dy * dy)
        if d - 2.0 * radius > theta_c:
            continue
        if d <= radius:
            return True
        half = math.asin(radius / d)
        if abs(wrap_angle(math.atan2(dy, dx) - heading)) <= cone + half:
            return True
    return False


@dataclass
class RobotState:
    id: int
    x: float
    y: float
    heading: float
    noise: ActuationNoise
    rng_walk: object = None
    rng_turn: object = None
    rng_sense: object = None
    fsm: int = RANDOM_WALK
    walk_left: int = 0  # us of forward driving still to do
    turn_left: int = 0  # us of turning still to do
    turn_angle_left: float = 0.0
    turn_dir: int = 1
    turn_is_ca: bool = False
    observe_end: int = 0
    resume: int = RANDOM_WALK
    last_sample: int = 0  # reference time of the tau timer
    odometer: float = 0.0
    time_walk: int = 0
    time_turn: int = 0
    time_observe: int = 0
    time_ca: int = 0
    n_obs: int = 0
    opinions: list[Opinion] = field(default_factory=list)


@dataclass(frozen=True)
class FsmContext:
    """Everything the FSM needs besides the robot itself."""

    grid: env.TileGrid
    params: RobotParams
    sensor: sensing.SensorConfig
    t_end: int  # us
    tau_us: int
    observe_us: int
    radius: float = BODY_RADIUS_MM
    wheel_base: float = WHEEL_BASE_MM

    @property
    def reset_at_end(self) -> bool:
        return self.params.tau_reset == TAU_RESET_END


def start_walk(robot: RobotState, ctx: FsmContext) -> None:
    robot.fsm = RANDOM_WALK
    robot.walk_left = walk_duration_us(draw_walk_duration(ctx.params.gamma0, ctx.params.gamma, robot.rng_walk))


def start_turn(robot: RobotState, is_ca: bool) -> None:
    angle, direction = draw_turn_angle(robot.rng_turn)
    robot.fsm = RANDOM_TURN
    robot.turn_angle_left = angle
    robot.turn_dir = direction
    robot.turn_left = turn_duration_us(angle)
    robot.turn_is_ca = is_ca


def _drive(robot: RobotState, ctx: FsmContext, t: int, seg: int) -> None:
    v_l, v_r = wheel_speeds(ctx.params.v_s, robot.noise, t, ctx.t_end)
    x0, y0 = robot.x, robot.y
    x, y, h = step_pose(x0, y0, robot.heading, v_l, v_r, seg / 1000000.0, ctx.wheel_base)
    x, y = clip_to_arena(x, y, ctx.grid.arena_width, ctx.grid.arena_height, ctx.radius)
    dx = x - x0
    dy = y - y0
    robot.odometer += math.sqrt(dx * dx + dy * dy)
    robot.x, robot.y, robot.heading = x, y, h


def fsm_step(robot: RobotState, ctx: FsmContext, now: int, dt: int, others) -> list[tuple]:
    """Advance one robot from ``now`` to ``now + dt`` (microseconds).

    Transitions inside the step happen at their exact times. Obstacles are
    sensed at the start of the step and whenever the walk (re)starts, against
    the positions ``others`` held at the start of the step. Returns the
    ``state`` and ``obs`` events produced, in time order.
    """
    events = []
    t = now
    t1 = now + dt
    tau = ctx.tau_us
    check = True
    while True:
        st = robot.fsm
        if st == OBSERVE:
            if t >= robot.observe_end:
                tile = env.tile_at(ctx.grid, (robot.x, robot.y))
                energy, obs = sensing.measure(tile, ctx.sensor, robot.rng_sense)
                robot.n_obs += 1
                events.append(("obs", t, robot.id, robot.x, robot.y, tile, energy, obs, robot.odometer))
                if ctx.reset_at_end:
                    robot.last_sample = t
                robot.fsm = robot.resume
                events.append(("state", t, robot.id, STATE_NAMES[OBSERVE], STATE_NAMES[robot.fsm], "observed"))
                check = True
                continue
        else:
            if t >= robot.last_sample + tau:
                robot.resume = st
                robot.fsm = OBSERVE
                robot.observe_end = t + ctx.observe_us
                if not ctx.reset_at_end:
                    robot.last_sample = t
                events.append(("state", t, robot.id, STATE_NAMES[st], STATE_NAMES[OBSERVE], "timer"))
                continue
            if st == RANDOM_WALK:
                if robot.walk_left <= 0:
                    start_turn(robot, False)
                    events.append(("state", t, robot.id, STATE_NAMES[st], STATE_NAMES[RANDOM_TURN], "walk_end"))
                    continue
                if check:
                    check = False
                    if detect_obstacle(robot.x, robot.y, robot.heading, others, ctx.grid.arena_width,
                                       ctx.grid.arena_height, ctx.params.theta_c, ctx.radius):
                        start_turn(robot, True)
                        events.append(("state", t, robot.id, STATE_NAMES[st], STATE_NAMES[RANDOM_TURN], "obstacle"))
                        continue
            elif robot.turn_left <= 0:
                start_walk(robot, ctx)
                check = True
                events.append(("state", t, robot.id, STATE_NAMES[st], STATE_NAMES[RANDOM_WALK], "turn_end"))
                continue
        if t >= t1:
            break
        if st == OBSERVE:
            end = robot.observe_end if robot.observe_end < t1 else t1
            seg = end - t
            robot.time_observe += seg
        else:
            seg = t1 - t
            to_tau = robot.last_sample + tau - t
            if to_tau < seg:
                seg = to_tau
            if st == RANDOM_WALK:
                if robot.walk_left < seg:
                    seg = robot.walk_left
                _drive(robot, ctx, t, seg)
                robot.walk_left -= seg
                robot.time_walk += seg
            else:
                if robot.turn_left <= seg:
                    seg = robot.turn_left
                    rot = robot.turn_angle_left
                else:
                    rot = TURN_RATE * seg
                robot.heading = wrap_angle(robot.heading + robot.turn_dir * rot)
                robot.turn_angle_left -= rot
                robot.turn_left -= seg
                robot.time_turn += seg
                if robot.turn_is_ca:
                    robot.time_ca += seg
        t += seg
    return events
