"""CLI commands: config validation, output schema, determinism, exit codes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from fairtask import cli, world

DATA = Path(__file__).parent / "data"


def run_cli(args):
    return cli.main(list(args))


# ---------------------------------------------------------------------------
# Scenario file round trip
# ---------------------------------------------------------------------------


def test_scenario_roundtrip(tmp_path):
    sc = world.generate_scenario(3, 2.5, seed=123)
    path = tmp_path / "scenario.json"
    cli.save_scenario(sc, path)
    loaded = cli.load_scenario(path)
    assert loaded == sc


def test_scenario_version_checked(tmp_path):
    sc = world.generate_scenario(3, 2.5, seed=123)
    path = tmp_path / "scenario.json"
    cli.save_scenario(sc, path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(cli.ConfigError):
        cli.load_scenario(path)


def test_scenario_alpha_override(tmp_path):
    sc = world.generate_scenario(3, 2.5, seed=123, alpha=0.97)
    path = tmp_path / "scenario.json"
    cli.save_scenario(sc, path)
    loaded = cli.load_scenario(path, alpha_override=0.9)
    assert loaded.alpha == 0.9


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_single_episode_csv_shape(tmp_path):
    out = tmp_path / "out"
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "1", "--seed", "3", "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.RESULT_COLUMNS)
    assert len(lines) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["episodes"] == 1


def test_run_byte_identical_reruns(tmp_path):
    args = [
        "run", "--generate", "N=3,map=2.5", "--algorithm", "hungarian",
        "--episodes", "2", "--seed", "9",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(args + ["--out", str(out1)]) == 0
    assert run_cli(args + ["--out", str(out2)]) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_run_online_requires_k(tmp_path):
    out = tmp_path / "never"
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "online",
        "--episodes", "1", "--out", str(out),
    ])
    assert rc == 1
    assert not out.exists()  # rejected before any file was written


def test_run_k_invalid_for_centralized(tmp_path):
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg", "--k", "2",
        "--episodes", "1", "--out", str(tmp_path / "x"),
    ])
    assert rc == 1


def test_run_online_end_to_end(tmp_path):
    out = tmp_path / "on"
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "online", "--k", "2",
        "--episodes", "1", "--seed", "5", "--out", str(out), "--dump-json",
    ])
    assert rc == 0
    rows = json.loads((out / "results.json").read_text())
    assert rows[0]["algorithm"] == "online"
    assert rows[0]["k"] == 2


def test_run_golden_reference(tmp_path):
    out = tmp_path / "golden"
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "2", "--seed", "2024", "--out", str(out),
    ])
    assert rc == 0
    assert (out / "results.csv").read_bytes() == (DATA / "golden_run.csv").read_bytes()


def test_out_dir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "envdir"
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(target))
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "1", "--seed", "3", "--out", str(tmp_path / "ignored"),
    ])
    assert rc == 0
    assert (target / "results.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_reward_constants_file(tmp_path):
    consts = tmp_path / "rewards.json"
    consts.write_text(json.dumps({"kappa": 2.0, "collision_penalty": -1.0}))
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "1", "--seed", "3", "--out", str(tmp_path / "o"),
        "--reward-constants", str(consts),
    ])
    assert rc == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"collision_penalty": 5.0}))
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "1", "--out", str(tmp_path / "o2"),
        "--reward-constants", str(bad),
    ])
    assert rc == 1


# ---------------------------------------------------------------------------
# compare / sweep-k
# ---------------------------------------------------------------------------


def test_compare_needs_two_algorithms(tmp_path):
    rc = run_cli([
        "compare", "--generate", "N=3,map=2.5", "--algorithms", "eg",
        "--episodes", "1", "--out", str(tmp_path / "c"),
    ])
    assert rc == 1


def test_compare_grid_output(tmp_path, capsys):
    out = tmp_path / "cmp"
    rc = run_cli([
        "compare", "--generate", "N=3,map=2.5",
        "--algorithms", "eg,hungarian,minmax",
        "--episodes", "2", "--seed", "6", "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[1].startswith("eg,")
    assert lines[2].startswith("hungarian,")
    printed = capsys.readouterr().out
    assert "algorithm" in printed and "jain" in printed


def test_compare_rerun_identical(tmp_path):
    args = [
        "compare", "--generate", "N=3,map=2.5", "--algorithms", "eg,minmax",
        "--episodes", "2", "--seed", "8",
    ]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(args + ["--out", str(a)]) == 0
    assert run_cli(args + ["--out", str(b)]) == 0
    assert (a / "compare.csv").read_bytes() == (b / "compare.csv").read_bytes()


def test_sweep_rejects_k_above_n(tmp_path):
    rc = run_cli([
        "sweep-k", "--generate", "N=3,map=2.5", "--k-values", "2,4",
        "--episodes", "1", "--out", str(tmp_path / "s"),
    ])
    assert rc == 1


def test_sweep_degenerate_single_task(tmp_path):
    out = tmp_path / "s1"
    rc = run_cli([
        "sweep-k", "--generate", "N=1,map=2.5", "--k-values", "1,1",
        "--episodes", "2", "--seed", "10", "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[1] == lines[2]  # degenerate sweep rows are identical


def test_sweep_table_shape(tmp_path):
    out = tmp_path / "s2"
    rc = run_cli([
        "sweep-k", "--generate", "N=3,map=2.5", "--k-values", "1,2,3",
        "--episodes", "1", "--seed", "4", "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("k,regret_mean")
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "3"]


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


def test_exit_code_parse_error():
    assert run_cli(["run", "--algorithm", "eg"]) == 1  # missing scenario source


def test_exit_code_config_error(tmp_path):
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "0", "--out", str(tmp_path / "x"),
    ])
    assert rc == 1


def test_exit_code_runtime_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("occupied")
    rc = run_cli([
        "run", "--generate", "N=3,map=2.5", "--algorithm", "eg",
        "--episodes", "1", "--out", str(blocker / "sub"),
    ])
    assert rc == 2


def test_generate_spec_parsing():
    with pytest.raises(cli.ConfigError):
        cli._parse_generate("N=3,bogus=1", 0.97)
    with pytest.raises(cli.ConfigError):
        cli._parse_generate("map=2.5", 0.97)
    parsed = cli._parse_generate("N=7,map=2.7,obstacles=2,walls=1", 0.9)
    assert parsed == dict(
        n_agents=7, map_size=2.7, n_obstacles=2, n_walls=1, alpha=0.9
    )
