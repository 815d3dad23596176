"""Command-line entry point: run | batch | pso | grid | envgen | metrics."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import __version__, engine, env, optimize
from . import rng as rngmod

SEED_ENV = "SWARM_PERCEPT_SEED"
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2


class _Invalid(Exception):
    pass


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise _Invalid(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise _Invalid(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise _Invalid(f"{path}: config must be a JSON object")
    return data


def _seed(args, config_seed: int) -> int:
    """Flag beats environment variable beats config file."""
    if args.seed is not None:
        return args.seed
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            return int(env_seed)
        except ValueError:
            raise _Invalid(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    return config_seed


def _sim_config(data: dict, args) -> engine.SimConfig:
    try:
        cfg = engine.SimConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise _Invalid(f"invalid config: {exc}") from None
    return replace(cfg, seed=_seed(args, cfg.seed))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(config_hash: str, seed: int) -> str:
    return f"# swarm_percept {__version__} config_sha256={config_hash} seed={seed}\n"


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(path)


def _summary_json(result: engine.BatchResult) -> str:
    def clean(v):
        if isinstance(v, float) and math.isnan(v):
            return None
        if isinstance(v, (tuple, list)):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    payload = {"seed": result.config.seed, "config_sha256": result.config.sha256(),
               "replicates": len(result.replicates), "strategies": clean(result.summary())}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    cfg = _sim_config(_read_json(args.config), args)
    out = _out_dir(args)
    log = engine.run(cfg, args.backend)
    result = engine.BatchResult(cfg, [engine.summarize(log)])
    _write(out / "stats.csv", result.to_csv())
    _write(out / "summary.json", _summary_json(result))
    if args.emit_runlog:
        _write(out / "runlog.ndjson", log.to_ndjson())
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _sim_config(_read_json(args.config), args)
    if args.replicates is not None:
        cfg = replace(cfg, replicates=args.replicates)
    out = _out_dir(args)
    result = engine.batch(cfg, workers=args.workers, backend=args.backend, keep_logs=args.emit_runlog)
    _write(out / "stats.csv", result.to_csv())
    _write(out / "summary.json", _summary_json(result))
    if args.emit_runlog:
        for r, text in enumerate(result.runlogs):
            (out / f"runlog_{r:04d}.ndjson").write_text(text)
    return EXIT_OK


def _nested_sim(data: dict, args) -> tuple[dict, engine.SimConfig]:
    data = dict(data)
    sim = _sim_config(data.pop("sim", {}), args)
    return data, sim


def cmd_pso(args) -> int:
    raw = _read_json(args.config)
    data, sim = _nested_sim(raw, args)
    unknown = set(data) - {f.name for f in fields(optimize.PsoConfig)}
    if unknown:
        raise _Invalid(f"invalid config: unknown PSO fields {sorted(unknown)}")
    try:
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items() if k != "seed"}
        pso = optimize.PsoConfig(seed=_seed(args, int(raw.get("seed", 0))), sim=sim, **kw)
    except (TypeError, ValueError) as exc:
        raise _Invalid(f"invalid config: {exc}") from None
    out = _out_dir(args)
    res = optimize.pso_run(pso, workers=args.workers)
    cols = ["iteration", "particle", "fitness", "mean_evaluation", "n_evaluations", "personal_best",
            "global_best", *optimize.DIM_NAMES]
    buf = io.StringIO()
    buf.write(_provenance(sim.sha256(), pso.seed))
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in res.trace:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write(out / "pso_trace.csv", buf.getvalue())
    best = res.best_params(sim.robot)
    fragment = {"robot": asdict(best), "fitness": res.best_fitness,
                "position": [float(v) for v in res.best_position]}
    _write(out / "best_particle.json", json.dumps(fragment, indent=2) + "\n")
    return EXIT_OK


def cmd_grid(args) -> int:
    raw = _read_json(args.config)
    data, sim = _nested_sim(raw, args)
    unknown = set(data) - {"etas", "kappas", "replicates", "baseline"}
    if unknown:
        raise _Invalid(f"invalid config: unknown grid-search fields {sorted(unknown)}")
    etas = data.get("etas", list(optimize.DEFAULT_ETAS))
    kappas = data.get("kappas", list(optimize.DEFAULT_KAPPAS))
    n = int(data.get("replicates", sim.replicates))
    try:
        rows = optimize.grid_search(etas, kappas, n, sim, bool(data.get("baseline", True)), args.workers, args.backend)
    except ValueError as exc:
        raise _Invalid(f"invalid config: {exc}") from None
    out = _out_dir(args)
    cols = ["strategy", "eta", "kappa", "decision_time_s", "decision_time_se", "accuracy", "accuracy_se",
            "undecided_fraction"]
    buf = io.StringIO()
    buf.write(_provenance(sim.sha256(), sim.seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in cols])
    _write(out / "grid_search.csv", buf.getvalue())
    return EXIT_OK


def cmd_envgen(args) -> int:
    seed = _seed(args, 0)
    try:
        if args.kind == "random":
            rng = rngmod.global_rng(seed, "grid")
            grid = env.gen_random(args.rows, args.cols, args.f, rng, args.tile_size)
        else:
            grid = env.gen_pattern(args.kind, args.rows, args.cols, args.f, args.tile_size)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    out = _out_dir(args)
    name = f"grid_{args.kind}_{args.rows}x{args.cols}_f{args.f:g}.json"
    _write(out / name, json.dumps(grid.to_dict()) + "\n")
    return EXIT_OK


def cmd_metrics(args) -> int:
    path = args.grid or args.config
    if path is None:
        raise _Invalid("metrics needs --grid PATH")
    data = _read_json(path)
    try:
        # accepts a bare grid object or a run config with an inline grid
        grid = env.TileGrid.from_dict(data["grid"] if isinstance(data.get("grid"), dict) else data)
        m = env.metrics(grid)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    text = json.dumps({"fill_ratio": m.fill_ratio, "moran_index": m.moran_index, "entropy": m.entropy}, indent=2) + "\n"
    if args.out:
        _write(_out_dir(args) / "metrics.json", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarm-percept", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True, workers=False):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--out", required=config_required, help="output directory")
        p.add_argument("--seed", type=int, default=None, help=f"master seed; overrides {SEED_ENV} and the config")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--backend", choices=("auto", "python", "compiled"), default=None)

    p = sub.add_parser("run", help="one simulation: stats CSV, summary, optional event log")
    common(p)
    p.add_argument("--emit-runlog", action="store_true", help="also write the NDJSON event log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="independent replicates: per-robot stats CSV and aggregates")
    common(p, workers=True)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--emit-runlog", action="store_true", help="also write one NDJSON event log per replicate")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("pso", help="noise-resistant PSO over (gamma0, gamma, tau, theta_c, O_c)")
    common(p, workers=True)
    p.set_defaults(func=cmd_pso)

    p = sub.add_parser("grid", help="soft-feedback grid search over (eta, kappa)")
    common(p, workers=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("envgen", help="write a generated floor as grid JSON")
    p.add_argument("--kind", required=True, choices=("random",) + env.PATTERN_KINDS)
    p.add_argument("--f", type=float, required=True, help="target fill ratio")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--tile-size", type=float, default=100.0, help="tile edge in mm")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_envgen)

    p = sub.add_parser("metrics", help="fill ratio, Moran index and entropy of a grid file")
    p.add_argument("--grid", default=None, help="grid JSON file")
    p.add_argument("--config", default=None, help="alias of --grid")
    p.add_argument("--out", default=None, help="write metrics.json here instead of stdout")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (_Invalid, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
