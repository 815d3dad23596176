"""Reference simulation loop in plain Python, built from the public module functions."""
from __future__ import annotations

from . import agent, decision, network
from .decision import SOFT_FEEDBACK, UNDECIDED, BetaModel, Opinion
from .world import World


def _decide(op: Opinion, strategy, params, t: int, i: int, p, events: list) -> None:
    new = decision.try_decide(op.model, op.obs_count, op.d_f, params.o_c, params.p_c, strategy.kind, p)
    if new != op.d_f:
        events.append(("decide", t, i, strategy.kind, op.d_f, new))
        if op.d_f == UNDECIDED:
            op.first_decision = t
        op.last_change = t
        op.d_f = new


def run_kernel(world: World) -> list[tuple]:
    params = world.params
    strategies = world.strategies
    n = world.n_robots
    ctx = agent.FsmContext(world.grid, params, world.sensor, world.t_end_us, world.tau_us, world.observe_us)
    streams = world.streams()
    robots = []
    log: list[tuple] = []
    for i, ((x, y, h), noise) in enumerate(zip(world.poses, world.noises)):
        s = streams[i]
        r = agent.RobotState(i, x, y, h, noise, s["walk"], s["turn"], s["sense"])
        r.opinions = [Opinion(BetaModel()) for _ in strategies]
        robots.append(r)
        log.append(("init", 0, i, x, y, h, noise.m_d, noise.s_d))
    for r in robots:
        agent.start_walk(r, ctx)
    inboxes = [network.Inbox(len(strategies)) for _ in range(n)]
    everyone = list(range(n))
    t = 0
    reason = "t_end"
    while t < world.t_end_us:
        t1 = t + world.dt_us
        if t1 > world.t_end_us:
            t1 = world.t_end_us
        step: list[tuple] = []
        for r in robots:
            box = inboxes[r.id]
            for k, strat in enumerate(strategies):
                if not box.pending(k):
                    continue
                op = r.opinions[k]
                op.model, op.obs_count, bits = network.drain_inbox(box, k, op.model, op.obs_count)
                ones = sum(bits)
                step.append(("recv", t, r.id, strat.kind, ones, len(bits) - ones))
                _decide(op, strat, params, t, r.id, None, step)
        snapshot = [(r.x, r.y) for r in robots]
        for r in robots:
            others = snapshot[:r.id] + snapshot[r.id + 1:]
            for ev in agent.fsm_step(r, ctx, t, t1 - t, others):
                step.append(ev)
                if ev[0] != "obs":
                    continue
                te = ev[1]
                obs = ev[7]
                for k, strat in enumerate(strategies):
                    op = r.opinions[k]
                    op.model = decision.update(op.model, obs)
                    op.obs_count += 1
                    step.append(("post", te, r.id, strat.kind, op.model.alpha, op.model.beta, op.obs_count))
                    p = decision.belief(op.model) if strat.kind == SOFT_FEEDBACK else None
                    _decide(op, strat, params, te, r.id, p, step)
                    if strat.kind == SOFT_FEEDBACK:
                        bit = decision.construct_message(strat, p, obs, op.d_f, decision.variance(op.model),
                                                         streams[r.id]["msg"])
                    else:
                        bit = decision.construct_message(strat, 0.5, obs, op.d_f, 0.0, None)
                    recipients = everyone[:r.id] + everyone[r.id + 1:]
                    got = network.broadcast(r.id, network.Message(r.id, bit, strat.kind), recipients,
                                            world.loss_prob, streams[r.id]["net"])
                    for j in got:
                        inboxes[j].push(k, bit)
                    step.append(("msg", te, r.id, strat.kind, bit, len(got), len(recipients) - len(got)))
        step.sort(key=lambda e: e[1])
        log.extend(step)
        t = t1
        if all(op.d_f != UNDECIDED for r in robots for op in r.opinions):
            reason = "all_decided"
            break
    for r in robots:
        for k, strat in enumerate(strategies):
            op = r.opinions[k]
            log.append(("final", t, r.id, strat.kind, op.model.alpha, op.model.beta, op.obs_count, op.d_f,
                        op.first_decision, inboxes[r.id].pending(k)))
    for r in robots:
        log.append(("robot", t, r.id, r.time_walk, r.time_turn, r.time_ca, r.time_observe, r.odometer, r.n_obs))
    log.append(("end", t, -1, reason))
    return log
