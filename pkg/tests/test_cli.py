import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import pytest

from swarm_percept import cli, env

RUN = {"seed": 3, "t_end_ms": 200000, "swarm_size": 4, "robot": {"o_c": 40},
       "strategies": [{"kind": "no_feedback"}, {"kind": "soft_feedback", "eta": 1500, "kappa": 2}]}
DEMO = resources.files("swarm_percept") / "data" / "demo_grid_5x5.json"


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def csv_ok(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# swarm_percept ") and "config_sha256=" in lines[0] and "seed=" in lines[0]
    assert not lines[1].startswith("#")
    return lines


def test_metrics_demo_grid(capsys):
    assert cli.main(["metrics", "--grid", str(DEMO)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["fill_ratio"] == 0.48


def test_envgen_then_metrics(tmp_out, capsys):
    assert cli.main(["envgen", "--kind", "stripe", "--f", "0.48", "--out", str(tmp_out)]) == 0
    path = tmp_out / "grid_stripe_10x10_f0.48.json"
    assert env.TileGrid.load(path).n_vibrating == 48
    capsys.readouterr()
    assert cli.main(["metrics", "--grid", str(path), "--out", str(tmp_out)]) == 0
    m = json.loads((tmp_out / "metrics.json").read_text())
    assert abs(m["moran_index"] - 0.88) <= 0.05


def test_envgen_random_seeded(tmp_path):
    outs = []
    for name in ("a", "b"):
        cli.main(["envgen", "--kind", "random", "--f", "0.48", "--rows", "5", "--cols", "5", "--seed", "4",
                  "--out", str(tmp_path / name)])
        outs.append((tmp_path / name / "grid_random_5x5_f0.48.json").read_bytes())
    assert outs[0] == outs[1]


def test_run_byte_identical(tmp_path):
    cfg = write(tmp_path, "run.json", RUN)
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name), "--emit-runlog"]) == 0
    for f in ("stats.csv", "summary.json", "runlog.ndjson"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = csv_ok(tmp_path / "a" / "stats.csv")
    assert lines[1].startswith("replicate,robot_id,strategy,decision_time_s,correct,ca_time_per_sample_s,"
                               "intersample_mm,loss_measured")
    assert len(lines) == 2 + 4 * 2


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, "run.json", RUN)

    def seed_of(*extra):
        out = tmp_path / f"o{len(list(tmp_path.iterdir()))}"
        assert cli.main(["run", "--config", cfg, "--out", str(out), *extra]) == 0
        return json.loads((out / "summary.json").read_text())["seed"]

    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    assert seed_of() == 3
    monkeypatch.setenv(cli.SEED_ENV, "17")
    assert seed_of() == 17
    assert seed_of("--seed", "23") == 23


def test_batch_outputs(tmp_path):
    cfg = write(tmp_path, "b.json", dict(RUN, replicates=3))
    assert cli.main(["batch", "--config", cfg, "--out", str(tmp_path / "one"), "--emit-runlog"]) == 0
    assert cli.main(["batch", "--config", cfg, "--out", str(tmp_path / "two"), "--workers", "2"]) == 0
    one = (tmp_path / "one" / "stats.csv").read_bytes()
    assert one == (tmp_path / "two" / "stats.csv").read_bytes()
    assert len(csv_ok(tmp_path / "one" / "stats.csv")) == 2 + 3 * 4 * 2
    assert sorted(p.name for p in (tmp_path / "one").glob("runlog_*.ndjson")) == [
        "runlog_0000.ndjson", "runlog_0001.ndjson", "runlog_0002.ndjson"]
    summary = json.loads((tmp_path / "one" / "summary.json").read_text())
    assert set(summary["strategies"]) == {"no_feedback", "soft_feedback"}


def test_pso_outputs(tmp_path):
    cfg = write(tmp_path, "p.json", {"seed": 1, "n_particles": 3, "n_iterations": 2, "n_evals": 2,
                                     "elite_evals": 1, "sim": {"t_end_ms": 100000}})
    assert cli.main(["pso", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = csv_ok(tmp_path / "pso_trace.csv")
    assert lines[1].split(",")[:3] == ["iteration", "particle", "fitness"]
    assert len(lines) == 2 + 2 * 3
    best = json.loads((tmp_path / "best_particle.json").read_text())
    assert set(best["robot"]) >= {"gamma0", "gamma", "tau", "theta_c", "o_c"}


def test_grid_outputs(tmp_path):
    cfg = write(tmp_path, "g.json", {"etas": [1000, 2000], "kappas": [2], "replicates": 2,
                                     "sim": {"seed": 1, "t_end_ms": 100000, "robot": {"o_c": 30}}})
    assert cli.main(["grid", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = csv_ok(tmp_path / "grid_search.csv")
    assert len(lines) == 2 + 3


@pytest.mark.parametrize("data,code", [
    ({"swarm_size": 0}, 2),
    ({"unknown_key": 1}, 2),
    ({"grid": {"kind": "random", "rows": 2, "cols": 2, "f": 0.5}}, 2),
])
def test_invalid_configs(tmp_path, capsys, data, code):
    cfg = write(tmp_path, "bad.json", data)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == code
    assert "error" in capsys.readouterr().err


def test_missing_and_malformed_config(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_unwritable_output(tmp_path):
    cfg = write(tmp_path, "run.json", RUN)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--config", cfg, "--out", str(blocker / "sub")]) == 1


def test_bad_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "abc")
    assert cli.main(["run", "--config", write(tmp_path, "r.json", RUN), "--out", str(tmp_path)]) == 2


def test_unknown_command():
    with pytest.raises(SystemExit) as exc:
        cli.main(["fly"])
    assert exc.value.code != 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "swarm_percept.cli", "metrics", "--grid", str(DEMO)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["fill_ratio"] == 0.48


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    from swarm_percept import engine
    for path in sorted(root.glob("*.json")):
        data = json.loads(path.read_text())
        engine.SimConfig.from_dict(data.get("sim", data))
