"""Time the compiled and pure-Python simulation kernels on the same worlds.

Every world is run by both backends and the event logs are compared, so the
benchmark doubles as an equality check.

    python3 benchmarks/bench_kernel.py [--runs N] [--swarm-size K] [--repeat R]
"""
from __future__ import annotations

import argparse
import statistics
import sys
import time

from swarm_percept import engine, kernel
from swarm_percept.decision import NO_FEEDBACK, POSITIVE_FEEDBACK, SOFT_FEEDBACK, FeedbackStrategy


def time_backend(worlds, backend: str, repeat: int) -> tuple[float, list]:
    best = float("inf")
    logs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        logs = [kernel.run_kernel(w, backend) for w in worlds]
        best = min(best, time.perf_counter() - t0)
    return best, logs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=10, help="replicate worlds per backend")
    ap.add_argument("--swarm-size", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats; the best is reported")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not kernel.compiled_available():
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    strategies = (FeedbackStrategy(NO_FEEDBACK), FeedbackStrategy(POSITIVE_FEEDBACK),
                  FeedbackStrategy(SOFT_FEEDBACK, 1500, 2))
    base = engine.SimConfig(seed=args.seed, swarm_size=args.swarm_size, strategies=strategies)
    worlds = [engine.build_world(engine.replicate_config(base, r)) for r in range(args.runs)]

    t_py, logs_py = time_backend(worlds, "python", args.repeat)
    t_c, logs_c = time_backend(worlds, "compiled", args.repeat)
    identical = logs_py == logs_c
    events = statistics.mean(len(log) for log in logs_c)
    sim_s = statistics.mean(log[-1][1] for log in logs_c) / 1e6

    print(f"{args.runs} runs, {args.swarm_size} robots, 3 strategies, mean {sim_s:.0f} simulated s, "
          f"{events:.0f} events per run")
    print(f"python   {t_py / args.runs * 1e3:9.2f} ms/run")
    print(f"compiled {t_c / args.runs * 1e3:9.2f} ms/run")
    print(f"speedup  {t_py / t_c:9.1f}x")
    print(f"event logs identical: {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
