# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled simulation loop.

A line-by-line port of the Python reference: same draw order per stream, same
floating-point operation order, same event tuples.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport asin, atan2, ceil, cos, exp, fabs, floor, isinf, log, pow, sin, sqrt
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport calloc, free, malloc
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (random_standard_cauchy, random_standard_gamma,
                                           random_standard_normal, random_standard_uniform)

from operator import itemgetter

from . import agent as _agent
from . import decision as _decision
from . import sensing as _sensing

cdef double PI = _agent.PI
cdef double TWO_PI = _agent.TWO_PI
cdef double HALF_PI = _agent.HALF_PI
cdef double CONE = _agent.CONE_HALF_ANGLE
cdef double MM_PER_UNIT = _agent.MM_PER_S_PER_UNIT
cdef double TURN_RATE = _agent.TURN_RATE
cdef double WALK_CAP = <double>_agent.WALK_CAP_US
cdef int64_t WALK_CAP_I = _agent.WALK_CAP_US
cdef double SENSE_TWO_PI = _sensing.TWO_PI
cdef double LN2 = _decision.LN2
cdef double CF_EPS = _decision._CF_EPS
cdef double CF_TINY = _decision._CF_TINY
cdef int CF_MAXIT = _decision._CF_MAXIT
cdef int EXACT_MAX_N = _decision.EXACT_MAX_N

cdef enum:
    RW = 0
    TURN = 1
    OBSERVE = 2

cdef enum:
    K_NONE = 0
    K_POS = 1
    K_SOFT = 2

_STATE = _agent.STATE_NAMES
_by_time = itemgetter(1)

# Pascal triangle up to row 64; every entry fits in 64 bits
cdef uint64_t PASCAL[65][65]


cdef void _init_pascal():
    cdef int n, k
    for n in range(65):
        for k in range(65):
            PASCAL[n][k] = 0
        PASCAL[n][0] = 1
        for k in range(1, n + 1):
            PASCAL[n][k] = PASCAL[n - 1][k - 1] + PASCAL[n - 1][k]


_init_pascal()

cdef double *LOGFACT = NULL
cdef int64_t LOGFACT_LEN = 0


cdef int _grow_logfact(int64_t k) except -1:
    global LOGFACT, LOGFACT_LEN
    cdef int64_t new_len, i
    cdef double *buf
    if k < LOGFACT_LEN:
        return 0
    new_len = LOGFACT_LEN * 2 if LOGFACT_LEN > 0 else 1024
    while new_len <= k:
        new_len *= 2
    buf = <double *>malloc(new_len * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    if LOGFACT_LEN == 0:
        buf[0] = 0.0
        LOGFACT_LEN = 1
    else:
        for i in range(LOGFACT_LEN):
            buf[i] = LOGFACT[i]
        free(LOGFACT)
    for i in range(LOGFACT_LEN, new_len):
        buf[i] = buf[i - 1] + log(<double>i)
    LOGFACT = buf
    LOGFACT_LEN = new_len
    return 0


cdef double _beta_cf(double a, double b, double x) except? -1.0:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta, md
    cdef int m, m2
    if fabs(d) < CF_TINY:
        d = CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        md = <double>m
        aa = md * (b - md) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge for a={a}, b={b}")


cdef double incbeta_half(int64_t a, int64_t b) except? -1.0:
    cdef int64_t n = a + b - 1
    cdef uint64_t tail = 0
    cdef int64_t j
    cdef double front
    if n <= EXACT_MAX_N:
        for j in range(a, n + 1):
            tail += PASCAL[n][j]
        return <double>tail * pow(2.0, -<double>n)
    if a == b:
        return 0.5
    _grow_logfact(n)
    front = exp(LOGFACT[n] - LOGFACT[a - 1] - LOGFACT[b - 1] - (a + b) * LN2)
    if b < a:
        return front * _beta_cf(<double>a, <double>b, 0.5) / a
    return 1.0 - front * _beta_cf(<double>b, <double>a, 0.5) / b


def belief(int64_t alpha, int64_t beta):
    """Compiled counterpart of :func:`swarm_percept.decision.belief`, exposed for testing."""
    if alpha < 1 or beta < 1:
        raise ValueError("alpha and beta must be >= 1")
    return incbeta_half(alpha, beta)


cdef struct Robot:
    double x
    double y
    double heading
    double m_d
    double s_d
    double horizon
    int fsm
    int resume
    int turn_dir
    int turn_is_ca
    int64_t walk_left
    int64_t turn_left
    double turn_angle_left
    int64_t observe_end
    int64_t last_sample
    double odometer
    int64_t t_walk
    int64_t t_turn
    int64_t t_obs
    int64_t t_ca
    int64_t n_obs
    bitgen_t *g_walk
    bitgen_t *g_turn
    bitgen_t *g_sense
    bitgen_t *g_msg
    bitgen_t *g_net


cdef struct Ctx:
    double width
    double height
    double tile_size
    int cols
    double gamma0
    double gamma
    double theta_c
    double v_s
    double radius
    double wheel_base
    int64_t t_end
    int64_t tau_us
    int64_t observe_us
    int reset_at_end
    # sensing
    int statistical
    double theta_e
    double vib_shape, vib_scale, vib_shift
    double non_shape, non_scale, non_shift
    int n_samples
    double rate, freq, amp, noise, baseline
    double a1, a2, a3


cdef bitgen_t *_bitgen(object gen) except NULL:
    return <bitgen_t *>PyCapsule_GetPointer(gen.bit_generator.capsule, "BitGenerator")


cdef inline double wrap_angle(double a) noexcept:
    while a > PI:
        a -= TWO_PI
    while a <= -PI:
        a += TWO_PI
    return a


cdef inline double clamp_speed(double v) noexcept:
    if v < 0.0:
        return 0.0
    if v > 100.0:
        return 100.0
    return v


cdef int64_t draw_walk_us(Ctx *c, Robot *r) noexcept:
    cdef double t
    if c.gamma == 0.0:
        t = c.gamma0
    else:
        while True:
            t = c.gamma0 + c.gamma * random_standard_cauchy(r.g_walk)
            if t > 0:
                break
    t = t * 1000.0
    if t >= WALK_CAP:
        return WALK_CAP_I
    return <int64_t>ceil(t)


cdef void start_walk(Ctx *c, Robot *r) noexcept:
    r.fsm = RW
    r.walk_left = draw_walk_us(c, r)


cdef void start_turn(Robot *r, int is_ca) noexcept:
    cdef double phi = -PI + TWO_PI * random_standard_uniform(r.g_turn)
    r.fsm = TURN
    r.turn_angle_left = fabs(phi)
    r.turn_dir = 1 if phi >= 0 else -1
    r.turn_left = <int64_t>ceil(r.turn_angle_left / TURN_RATE)
    r.turn_is_ca = is_ca


cdef bint detect(Ctx *c, Robot *robots, int n, int self_id, double *sx, double *sy) noexcept:
    cdef Robot *r = &robots[self_id]
    cdef double dirs[4]
    cdef double dists[4]
    cdef double delta, ray, dx, dy, d, half
    cdef int k, j
    dirs[0] = 0.0
    dists[0] = c.width - r.x
    dirs[1] = PI
    dists[1] = r.x
    dirs[2] = HALF_PI
    dists[2] = c.height - r.y
    dirs[3] = -HALF_PI
    dists[3] = r.y
    for k in range(4):
        delta = fabs(wrap_angle(dirs[k] - r.heading))
        if delta <= CONE:
            ray = dists[k]
        elif delta - CONE < HALF_PI:
            ray = dists[k] / cos(delta - CONE)
        else:
            continue
        if ray - c.radius <= c.theta_c:
            return True
    for j in range(n):
        if j == self_id:
            continue
        dx = sx[j] - r.x
        dy = sy[j] - r.y
        d = sqrt(dx * dx + dy * dy)
        if d - 2.0 * c.radius > c.theta_c:
            continue
        if d <= c.radius:
            return True
        half = asin(c.radius / d)
        if fabs(wrap_angle(atan2(dy, dx) - r.heading)) <= CONE + half:
            return True
    return False


cdef void drive(Ctx *c, Robot *r, int64_t t, int64_t seg) noexcept:
    cdef double b, span, v_l, v_r, sl, sr, v, w, dt, h1, rad, x, y, h, dx, dy
    if r.horizon <= 0 or isinf(r.horizon):
        b = 1.0
    else:
        span = r.horizon * <double>c.t_end
        b = (span - <double>t) / span
    v_l = clamp_speed(c.v_s * (1.0 - r.m_d) * r.s_d * b)
    v_r = clamp_speed(c.v_s * (1.0 + r.m_d) * r.s_d * b)
    dt = <double>seg / 1000000.0
    sl = v_l * MM_PER_UNIT
    sr = v_r * MM_PER_UNIT
    v = 0.5 * (sl + sr)
    w = (sr - sl) / c.wheel_base
    h = r.heading
    if w == 0.0:
        x = r.x + v * dt * cos(h)
        y = r.y + v * dt * sin(h)
    else:
        h1 = h + w * dt
        rad = v / w
        x = r.x + rad * (sin(h1) - sin(h))
        y = r.y - rad * (cos(h1) - cos(h))
        h = h1
    h = wrap_angle(h)
    if x < c.radius:
        x = c.radius
    elif x > c.width - c.radius:
        x = c.width - c.radius
    if y < c.radius:
        y = c.radius
    elif y > c.height - c.radius:
        y = c.height - c.radius
    dx = x - r.x
    dy = y - r.y
    r.odometer += sqrt(dx * dx + dy * dy)
    r.x = x
    r.y = y
    r.heading = h


cdef double measure(Ctx *c, Robot *r, int tile, double *buf) noexcept:
    cdef double shape, scale, shift, e, amp, phase, s, acc, prev_out, prev_in, a
    cdef int i
    if c.statistical:
        if tile:
            shape = c.vib_shape
            scale = c.vib_scale
            shift = c.vib_shift
        else:
            shape = c.non_shape
            scale = c.non_scale
            shift = c.non_shift
        e = shift + scale * random_standard_gamma(r.g_sense, shape)
        return e if e > 0.0 else 0.0
    amp = c.amp if tile else 0.0
    phase = SENSE_TWO_PI * random_standard_uniform(r.g_sense) if tile else 0.0
    for i in range(c.n_samples):
        s = c.baseline + amp * sin(SENSE_TWO_PI * c.freq * i / c.rate + phase)
        buf[i] = s + c.noise * random_standard_normal(r.g_sense)
    prev_out = 0.0
    prev_in = buf[0]
    acc = 0.0
    for i in range(c.n_samples):
        a = buf[i]
        prev_out = c.a1 * prev_out + c.a2 * a + c.a3 * prev_in
        prev_in = a
        acc += prev_out * prev_out
    return sqrt(acc / c.n_samples)


cdef class _Opinions:
    """Per (robot, strategy) posterior state, flattened as robot * S + strategy."""

    cdef int64_t *alpha
    cdef int64_t *beta
    cdef int64_t *count
    cdef int *d_f
    cdef int64_t *first
    cdef int64_t *inbox_ones
    cdef int64_t *inbox_zeros

    def __cinit__(self, int size):
        self.alpha = <int64_t *>calloc(size, sizeof(int64_t))
        self.beta = <int64_t *>calloc(size, sizeof(int64_t))
        self.count = <int64_t *>calloc(size, sizeof(int64_t))
        self.d_f = <int *>calloc(size, sizeof(int))
        self.first = <int64_t *>calloc(size, sizeof(int64_t))
        self.inbox_ones = <int64_t *>calloc(size, sizeof(int64_t))
        self.inbox_zeros = <int64_t *>calloc(size, sizeof(int64_t))
        if (self.alpha == NULL or self.beta == NULL or self.count == NULL or self.d_f == NULL
                or self.first == NULL or self.inbox_ones == NULL or self.inbox_zeros == NULL):
            raise MemoryError()
        for i in range(size):
            self.alpha[i] = 1
            self.beta[i] = 1
            self.d_f[i] = -1
            self.first[i] = -1

    def __dealloc__(self):
        free(self.alpha)
        free(self.beta)
        free(self.count)
        free(self.d_f)
        free(self.first)
        free(self.inbox_ones)
        free(self.inbox_zeros)


cdef int _decide(_Opinions ops, int idx, int kind, object name, int o_c, double p_c, int64_t t, int i,
                 double p, bint have_p, list events) except -1:
    cdef int old = ops.d_f[idx]
    cdef int new = old
    if not (kind == K_SOFT or old == -1) or ops.count[idx] <= o_c:
        return 0
    if not have_p:
        p = incbeta_half(ops.alpha[idx], ops.beta[idx])
    if p >= p_c:
        new = 0
    elif 1.0 - p >= p_c:
        new = 1
    if new != old:
        events.append(("decide", t, i, name, old, new))
        if old == -1:
            ops.first[idx] = t
        ops.d_f[idx] = new
    return 0


def run_kernel(world):
    cdef int n = world.n_robots
    cdef int S = len(world.strategies)
    cdef Ctx c
    cdef Robot *robots = NULL
    cdef double *sx = NULL
    cdef double *sy = NULL
    cdef double *buf = NULL
    cdef int *kinds = NULL
    cdef double *etas = NULL
    cdef double *kappas = NULL
    cdef int i, j, k, idx, obs, tile, bit, delivered, o_c, st, all_done
    cdef int64_t t, t1, tt, seg, end, to_tau, dt_us = world.dt_us, ones, zeros
    cdef double loss = world.loss_prob, p_c, energy, p, a, b, s, var, delta, q, rot
    cdef bint check
    cdef Robot *r
    cdef _Opinions ops = _Opinions(max(1, n * S))

    grid = world.grid
    params = world.params
    sensor = world.sensor
    names = [s_.kind for s_ in world.strategies]
    tiles = grid.tiles
    c.width = grid.arena_width
    c.height = grid.arena_height
    c.tile_size = grid.tile_size
    c.cols = grid.cols
    c.gamma0 = params.gamma0
    c.gamma = params.gamma
    c.theta_c = params.theta_c
    c.v_s = params.v_s
    c.radius = _agent.BODY_RADIUS_MM
    c.wheel_base = _agent.WHEEL_BASE_MM
    c.t_end = world.t_end_us
    c.tau_us = world.tau_us
    c.observe_us = world.observe_us
    c.reset_at_end = params.tau_reset == _agent.TAU_RESET_END
    c.statistical = sensor.mode == _sensing.STATISTICAL
    c.theta_e = sensor.theta_e
    c.vib_shape, c.vib_scale, c.vib_shift = sensor.gamma_vib
    c.non_shape, c.non_scale, c.non_shift = sensor.gamma_nonvib
    c.n_samples = sensor.n_samples
    c.rate = sensor.sample_rate
    c.freq = sensor.signal_freq
    c.amp = sensor.signal_amplitude
    c.noise = sensor.signal_noise
    c.baseline = sensor.signal_baseline
    c.a1 = sensor.alpha1
    c.a2 = sensor.alpha2
    c.a3 = sensor.alpha3
    o_c = params.o_c
    p_c = params.p_c

    streams = world.streams()  # keeps the generators alive for the whole run
    log = []
    try:
        robots = <Robot *>calloc(max(1, n), sizeof(Robot))
        sx = <double *>malloc(max(1, n) * sizeof(double))
        sy = <double *>malloc(max(1, n) * sizeof(double))
        buf = <double *>malloc(max(1, c.n_samples) * sizeof(double))
        kinds = <int *>malloc(max(1, S) * sizeof(int))
        etas = <double *>malloc(max(1, S) * sizeof(double))
        kappas = <double *>malloc(max(1, S) * sizeof(double))
        if robots == NULL or sx == NULL or sy == NULL or buf == NULL or kinds == NULL or etas == NULL or kappas == NULL:
            raise MemoryError()
        for k, strat in enumerate(world.strategies):
            kinds[k] = K_SOFT if strat.kind == _decision.SOFT_FEEDBACK else (
                K_POS if strat.kind == _decision.POSITIVE_FEEDBACK else K_NONE)
            etas[k] = strat.eta
            kappas[k] = strat.kappa
        for i in range(n):
            r = &robots[i]
            pose = world.poses[i]
            noise = world.noises[i]
            r.x = pose[0]
            r.y = pose[1]
            r.heading = pose[2]
            r.m_d = noise.m_d
            r.s_d = noise.s_d
            r.horizon = noise.battery_horizon
            r.g_walk = _bitgen(streams[i]["walk"])
            r.g_turn = _bitgen(streams[i]["turn"])
            r.g_sense = _bitgen(streams[i]["sense"])
            r.g_msg = _bitgen(streams[i]["msg"])
            r.g_net = _bitgen(streams[i]["net"])
            log.append(("init", 0, i, r.x, r.y, r.heading, noise.m_d, noise.s_d))
        for i in range(n):
            start_walk(&c, &robots[i])

        t = 0
        reason = "t_end"
        while t < c.t_end:
            t1 = t + dt_us
            if t1 > c.t_end:
                t1 = c.t_end
            step = []
            for i in range(n):
                for k in range(S):
                    idx = i * S + k
                    ones = ops.inbox_ones[idx]
                    zeros = ops.inbox_zeros[idx]
                    if ones + zeros == 0:
                        continue
                    ops.alpha[idx] += ones
                    ops.beta[idx] += zeros
                    ops.count[idx] += ones + zeros
                    ops.inbox_ones[idx] = 0
                    ops.inbox_zeros[idx] = 0
                    step.append(("recv", t, i, names[k], ones, zeros))
                    _decide(ops, idx, kinds[k], names[k], o_c, p_c, t, i, 0.0, False, step)
            for i in range(n):
                sx[i] = robots[i].x
                sy[i] = robots[i].y
            for i in range(n):
                r = &robots[i]
                tt = t
                check = True
                while True:
                    st = r.fsm
                    if st == OBSERVE:
                        if tt >= r.observe_end:
                            tile = tiles[<int>floor(r.y / c.tile_size) * c.cols + <int>floor(r.x / c.tile_size)]
                            energy = measure(&c, r, tile, buf)
                            obs = 1 if energy > c.theta_e else 0
                            r.n_obs += 1
                            step.append(("obs", tt, i, r.x, r.y, tile, energy, obs, r.odometer))
                            if c.reset_at_end:
                                r.last_sample = tt
                            r.fsm = r.resume
                            check = True
                            for k in range(S):
                                idx = i * S + k
                                ops.alpha[idx] += obs
                                ops.beta[idx] += 1 - obs
                                ops.count[idx] += 1
                                step.append(("post", tt, i, names[k], ops.alpha[idx], ops.beta[idx], ops.count[idx]))
                                if kinds[k] == K_SOFT:
                                    p = incbeta_half(ops.alpha[idx], ops.beta[idx])
                                    _decide(ops, idx, kinds[k], names[k], o_c, p_c, tt, i, p, True, step)
                                    a = <double>ops.alpha[idx]
                                    b = <double>ops.beta[idx]
                                    s = a + b
                                    var = a * b / (s * s * (s + 1.0))
                                    delta = exp(-etas[k] * var) * pow(fabs(0.5 - p), kappas[k])
                                    q = delta * (1.0 - p) + (1.0 - delta) * obs
                                    bit = 1 if random_standard_uniform(r.g_msg) < q else 0
                                else:
                                    _decide(ops, idx, kinds[k], names[k], o_c, p_c, tt, i, 0.0, False, step)
                                    if kinds[k] == K_POS and ops.d_f[idx] != -1:
                                        bit = ops.d_f[idx]
                                    else:
                                        bit = obs
                                delivered = 0
                                for j in range(n):
                                    if j == i:
                                        continue
                                    if loss > 0.0 and (loss >= 1.0 or random_standard_uniform(r.g_net) < loss):
                                        continue
                                    delivered += 1
                                    if bit:
                                        ops.inbox_ones[j * S + k] += 1
                                    else:
                                        ops.inbox_zeros[j * S + k] += 1
                                step.append(("msg", tt, i, names[k], bit, delivered, n - 1 - delivered))
                            step.append(("state", tt, i, _STATE[OBSERVE], _STATE[r.fsm], "observed"))
                            continue
                    else:
                        if tt >= r.last_sample + c.tau_us:
                            r.resume = st
                            r.fsm = OBSERVE
                            r.observe_end = tt + c.observe_us
                            if not c.reset_at_end:
                                r.last_sample = tt
                            step.append(("state", tt, i, _STATE[st], _STATE[OBSERVE], "timer"))
                            continue
                        if st == RW:
                            if r.walk_left <= 0:
                                start_turn(r, 0)
                                step.append(("state", tt, i, _STATE[st], _STATE[TURN], "walk_end"))
                                continue
                            if check:
                                check = False
                                if detect(&c, robots, n, i, sx, sy):
                                    start_turn(r, 1)
                                    step.append(("state", tt, i, _STATE[st], _STATE[TURN], "obstacle"))
                                    continue
                        elif r.turn_left <= 0:
                            start_walk(&c, r)
                            check = True
                            step.append(("state", tt, i, _STATE[st], _STATE[RW], "turn_end"))
                            continue
                    if tt >= t1:
                        break
                    if st == OBSERVE:
                        end = r.observe_end if r.observe_end < t1 else t1
                        seg = end - tt
                        r.t_obs += seg
                    else:
                        seg = t1 - tt
                        to_tau = r.last_sample + c.tau_us - tt
                        if to_tau < seg:
                            seg = to_tau
                        if st == RW:
                            if r.walk_left < seg:
                                seg = r.walk_left
                            drive(&c, r, tt, seg)
                            r.walk_left -= seg
                            r.t_walk += seg
                        else:
                            if r.turn_left <= seg:
                                seg = r.turn_left
                                rot = r.turn_angle_left
                            else:
                                rot = TURN_RATE * seg
                            r.heading = wrap_angle(r.heading + r.turn_dir * rot)
                            r.turn_angle_left -= rot
                            r.turn_left -= seg
                            r.t_turn += seg
                            if r.turn_is_ca:
                                r.t_ca += seg
                    tt += seg
            step.sort(key=_by_time)
            log.extend(step)
            t = t1
            all_done = 1
            for idx in range(n * S):
                if ops.d_f[idx] == -1:
                    all_done = 0
                    break
            if all_done:
                reason = "all_decided"
                break
        for i in range(n):
            for k in range(S):
                idx = i * S + k
                log.append(("final", t, i, names[k], ops.alpha[idx], ops.beta[idx], ops.count[idx], ops.d_f[idx],
                            ops.first[idx], ops.inbox_ones[idx] + ops.inbox_zeros[idx]))
        for i in range(n):
            r = &robots[i]
            log.append(("robot", t, i, r.t_walk, r.t_turn, r.t_ca, r.t_obs, r.odometer, r.n_obs))
        log.append(("end", t, -1, reason))
    finally:
        free(robots)
        free(sx)
        free(sy)
        free(buf)
        free(kinds)
        free(etas)
        free(kappas)
    return log
