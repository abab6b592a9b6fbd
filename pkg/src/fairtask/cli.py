"""Command-line front end: scenario ingestion, experiments, CSV output.

Commands:
    run       one algorithm over a seeded episode family -> results.csv
    compare   several algorithms on the identical family -> compare.csv
    sweep-k   online algorithm across subset sizes       -> sweep.csv

Exit codes: 0 success, 1 configuration error, 2 runtime failure.  Output is
deterministic: a re-run with the same root seed is byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fairtask import engine, world

SCENARIO_FORMAT_VERSION = 1
OUT_DIR_ENV = "FAIRTASK_OUT_DIR"

RESULT_COLUMNS = (
    "episode", "seed", "algorithm", "k", "T", "D", "F_rho", "jain",
    "U_star", "U_pi", "regret", "collisions", "incomplete",
)

_ALGORITHMS = ("eg", "hungarian", "minmax", "online")


class ConfigError(ValueError):
    """Invalid experiment configuration; reported with exit code 1."""


@dataclass
class ExperimentConfig:
    command: str
    algorithm: str | None
    algorithms: tuple[str, ...]
    k: int | None
    k_values: tuple[int, ...]
    episodes: int
    root_seed: int
    alpha: float
    out_dir: Path
    scenario: world.Scenario | None
    generator: dict | None
    constants: engine.RewardConstants
    parallel: int
    execution: str
    dump_json: bool

    @property
    def n_agents(self) -> int:
        if self.scenario is not None:
            return self.scenario.n_agents
        return int(self.generator["n_agents"])


# ---------------------------------------------------------------------------
# Scenario file format
# ---------------------------------------------------------------------------


def save_scenario(sc: world.Scenario, path: Path | str) -> None:
    doc = {
        "version": SCENARIO_FORMAT_VERSION,
        "workspace_size": sc.workspace_size,
        "dt": sc.dt,
        "alpha": sc.alpha,
        "seed": sc.seed,
        "walls": [[list(a), list(b)] for a, b in sc.walls],
        "obstacles": [{"center": list(c), "radius": r} for c, r in sc.obstacles],
        "agents": [
            {
                "id": a.id,
                "start_position": list(a.start_position),
                "agent_type": a.agent_type,
                "sensing_radius": a.sensing_radius,
                "max_speed": a.max_speed,
                "preference_row": list(a.preference_row),
            }
            for a in sc.agents
        ],
        "tasks": [
            {
                "id": t.id,
                "position": list(t.position),
                "task_type": t.task_type,
                "workload": t.workload,
                "weight": t.weight,
            }
            for t in sc.tasks
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_scenario(path: Path | str, alpha_override: float | None = None) -> world.Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read scenario file {path}: {err}") from err
    if doc.get("version") != SCENARIO_FORMAT_VERSION:
        raise ConfigError(
            f"scenario file {path}: unsupported version {doc.get('version')!r}"
        )
    try:
        sc = world.Scenario(
            workspace_size=float(doc["workspace_size"]),
            walls=tuple(
                (tuple(map(float, a)), tuple(map(float, b))) for a, b in doc["walls"]
            ),
            obstacles=tuple(
                (tuple(map(float, o["center"])), float(o["radius"]))
                for o in doc["obstacles"]
            ),
            agents=tuple(
                world.AgentSpec(
                    id=int(a["id"]),
                    start_position=tuple(map(float, a["start_position"])),
                    agent_type=int(a["agent_type"]),
                    sensing_radius=float(a["sensing_radius"]),
                    max_speed=float(a["max_speed"]),
                    preference_row=tuple(map(float, a["preference_row"])),
                )
                for a in doc["agents"]
            ),
            tasks=tuple(
                world.TaskSpec(
                    id=int(t["id"]),
                    position=tuple(map(float, t["position"])),
                    task_type=int(t["task_type"]),
                    workload=float(t["workload"]),
                    weight=float(t["weight"]),
                )
                for t in doc["tasks"]
            ),
            seed=int(doc["seed"]),
            dt=float(doc["dt"]),
            alpha=float(doc["alpha"]),
        )
    except (KeyError, TypeError, world.ScenarioError) as err:
        raise ConfigError(f"scenario file {path}: {err}") from err
    if alpha_override is not None:
        sc = dataclasses.replace(sc, alpha=alpha_override)
    return sc


def _parse_generate(text: str, alpha: float) -> dict:
    """Parse 'N=7,map=2.7,...' generator shorthand into generator kwargs."""
    keymap = {
        "N": ("n_agents", int),
        "map": ("map_size", float),
        "obstacles": ("n_obstacles", int),
        "walls": ("n_walls", int),
        "types": ("n_types", int),
        "sensing": ("sensing_radius", float),
        "speed": ("max_speed", float),
        "dt": ("dt", float),
    }
    out: dict = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"--generate: expected key=value, got {part!r}")
        key, _, value = part.partition("=")
        if key not in keymap:
            raise ConfigError(f"--generate: unknown key {key!r}")
        name, cast = keymap[key]
        try:
            out[name] = cast(value)
        except ValueError as err:
            raise ConfigError(f"--generate: bad value for {key}: {value!r}") from err
    if "n_agents" not in out:
        raise ConfigError("--generate requires N=<count>")
    if "map_size" not in out and out["n_agents"] not in world.DEFAULT_MAP_SIZES:
        raise ConfigError("--generate requires map=<size> for this N")
    out["alpha"] = alpha
    return out


def _load_constants(path: str | None) -> engine.RewardConstants:
    if path is None:
        return engine.RewardConstants()
    try:
        doc = json.loads(Path(path).read_text())
        return engine.RewardConstants(**doc)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as err:
        raise ConfigError(f"bad reward constants file {path}: {err}") from err


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return "nan"
    return "%.6g" % v


def format_result_rows(rows) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for r in rows:
        stats = engine.episode_stats(r)
        lines.append(
            ",".join(
                [
                    _fmt(r.episode),
                    _fmt(r.seed),
                    r.rule,
                    _fmt(r.k) if r.k is not None else "",
                    _fmt(stats["T"]),
                    _fmt(stats["D"]),
                    _fmt(stats["F_rho"]),
                    _fmt(stats["jain"]),
                    _fmt(stats["U_star"]),
                    _fmt(stats["U_pi"]),
                    _fmt(stats["regret"]),
                    _fmt(stats["collisions"]),
                    _fmt(stats["incomplete"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _dump_rows_json(rows) -> str:
    payload = []
    for r in rows:
        stats = engine.episode_stats(r)
        payload.append(
            {
                "episode": r.episode,
                "seed": r.seed,
                "algorithm": r.rule,
                "k": r.k,
                **{key: (None if isinstance(v, float) and math.isnan(v) else v)
                   for key, v in stats.items()},
                "realized_utilities": [float(x) for x in r.realized_utilities],
                "weights": [float(x) for x in r.weights],
                "per_agent_distance": [float(x) for x in r.per_agent_distance],
                "discovery_times": [None if math.isnan(float(x)) else float(x)
                                    for x in r.discovery_times],
                "assignment_log": [[t, a, j] for t, a, j in r.assignment_log],
            }
        )
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _summary_doc(summary: dict, extra: dict) -> str:
    doc = dict(extra)
    doc.update(summary)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(config: ExperimentConfig) -> int:
    batch = engine.batch_run(
        algorithm=config.algorithm,
        episodes=config.episodes,
        root_seed=config.root_seed,
        generator=config.generator,
        scenario=config.scenario,
        k=config.k,
        constants=config.constants,
        execution=config.execution,
        parallel=config.parallel,
    )
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(format_result_rows(batch.rows))
    (out / "summary.json").write_text(
        _summary_doc(
            batch.summary,
            {"algorithm": config.algorithm, "k": config.k, "root_seed": config.root_seed},
        )
    )
    if config.dump_json:
        (out / "results.json").write_text(_dump_rows_json(batch.rows))
    print(f"wrote {out / 'results.csv'} ({config.episodes} episodes)")
    return 0


def cmd_compare(config: ExperimentConfig) -> int:
    grids = {}
    for algo in config.algorithms:
        batch = engine.batch_run(
            algorithm=algo,
            episodes=config.episodes,
            root_seed=config.root_seed,
            generator=config.generator,
            scenario=config.scenario,
            k=config.k if algo == "online" else None,
            constants=config.constants,
            execution=config.execution,
            parallel=config.parallel,
        )
        grids[algo] = batch.summary
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = ["algorithm"]
    for key in ("T", "D", "F_rho", "jain"):
        header += [f"{key}_mean", f"{key}_std"]
    lines = [",".join(header)]
    for algo in config.algorithms:
        s = grids[algo]
        row = [algo]
        for key in ("T", "D", "F_rho", "jain"):
            row += [_fmt(s["mean"][key]), _fmt(s["std"][key])]
        lines.append(",".join(row))
    (out / "compare.csv").write_text("\n".join(lines) + "\n")

    print(f"{'algorithm':<12}{'T':>10}{'D':>10}{'F_rho':>10}{'jain':>10}")
    for algo in config.algorithms:
        s = grids[algo]["mean"]
        print(
            f"{algo:<12}{_fmt(s['T']):>10}{_fmt(s['D']):>10}"
            f"{_fmt(s['F_rho']):>10}{_fmt(s['jain']):>10}"
        )
    return 0


def cmd_sweep_k(config: ExperimentConfig) -> int:
    summaries = {}
    for k in config.k_values:
        batch = engine.batch_run(
            algorithm="online",
            episodes=config.episodes,
            root_seed=config.root_seed,
            generator=config.generator,
            scenario=config.scenario,
            k=k,
            constants=config.constants,
            parallel=config.parallel,
        )
        summaries[k] = batch.summary
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = ["k"]
    for key in ("regret", "T", "D", "F_rho", "jain"):
        header += [f"{key}_mean", f"{key}_std"]
    lines = [",".join(header)]
    for k in config.k_values:
        s = summaries[k]
        row = [str(k)]
        for key in ("regret", "T", "D", "F_rho", "jain"):
            row += [_fmt(s["mean"][key]), _fmt(s["std"][key])]
        lines.append(",".join(row))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")

    print(f"{'k':<4}{'regret':>10}{'T':>10}{'D':>10}{'F_rho':>10}{'jain':>10}")
    for k in config.k_values:
        s = summaries[k]["mean"]
        print(
            f"{k:<4}{_fmt(s['regret']):>10}{_fmt(s['T']):>10}{_fmt(s['D']):>10}"
            f"{_fmt(s['F_rho']):>10}{_fmt(s['jain']):>10}"
        )
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairtask", description="Fair spatial task allocation experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p: argparse.ArgumentParser) -> None:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", metavar="FILE", help="scenario JSON file")
        src.add_argument(
            "--generate", metavar="SPEC",
            help="generator spec, e.g. N=7,map=2.7,obstacles=3,walls=2",
        )
        p.add_argument("--episodes", type=int, default=100)
        p.add_argument("--seed", type=int, default=0, help="root seed")
        p.add_argument("--alpha", type=float, default=0.97)
        p.add_argument("--out", default="out", help=f"output dir (env {OUT_DIR_ENV} overrides)")
        p.add_argument("--parallel", type=int, default=1)
        p.add_argument("--reward-constants", metavar="FILE", default=None)
        p.add_argument(
            "--execution", choices=("scripted", "teleport"), default="scripted"
        )

    p_run = sub.add_parser("run", help="run one algorithm over an episode family")
    _common(p_run)
    p_run.add_argument("--algorithm", choices=_ALGORITHMS, required=True)
    p_run.add_argument("--k", type=int, default=None, help="subset size (online only)")
    p_run.add_argument("--dump-json", action="store_true", help="full-precision dump")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare algorithms on one seed family")
    _common(p_cmp)
    p_cmp.add_argument(
        "--algorithms", required=True,
        help="comma-separated list from: " + ",".join(_ALGORITHMS),
    )
    p_cmp.add_argument("--k", type=int, default=None, help="subset size when online listed")
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep-k", help="sweep the online subset size")
    _common(p_swp)
    p_swp.add_argument("--k-values", required=True, help="comma-separated ints")
    p_swp.set_defaults(func=cmd_sweep_k)

    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {args.alpha}")
    if args.episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if args.parallel < 1:
        raise ConfigError("parallel must be >= 1")

    scenario = None
    generator = None
    if args.scenario is not None:
        scenario = load_scenario(args.scenario, alpha_override=args.alpha)
    else:
        generator = _parse_generate(args.generate, args.alpha)

    algorithm = getattr(args, "algorithm", None)
    algorithms: tuple[str, ...] = ()
    if args.command == "compare":
        algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        if len(algorithms) < 2:
            raise ConfigError("compare needs at least two algorithms")
        bad = [a for a in algorithms if a not in _ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms: {', '.join(bad)}")

    k = getattr(args, "k", None)
    k_values: tuple[int, ...] = ()
    n_agents = scenario.n_agents if scenario is not None else generator["n_agents"]
    if args.command == "run":
        if (algorithm == "online") != (k is not None):
            raise ConfigError("--k is required for online and invalid otherwise")
        if k is not None and not 1 <= k <= n_agents:
            raise ConfigError(f"k must lie in [1, {n_agents}]")
    if args.command == "compare":
        if ("online" in algorithms) != (k is not None):
            raise ConfigError("--k is required exactly when online is listed")
        if k is not None and not 1 <= k <= n_agents:
            raise ConfigError(f"k must lie in [1, {n_agents}]")
    if args.command == "sweep-k":
        try:
            k_values = tuple(int(x) for x in args.k_values.split(","))
        except ValueError as err:
            raise ConfigError(f"bad --k-values: {args.k_values!r}") from err
        if not k_values:
            raise ConfigError("--k-values must not be empty")
        for kv in k_values:
            if not 1 <= kv <= n_agents:
                raise ConfigError(f"k={kv} outside [1, {n_agents}]")

    out_dir = Path(os.environ.get(OUT_DIR_ENV) or args.out)
    return ExperimentConfig(
        command=args.command,
        algorithm=algorithm,
        algorithms=algorithms,
        k=k,
        k_values=k_values,
        episodes=args.episodes,
        root_seed=args.seed,
        alpha=args.alpha,
        out_dir=out_dir,
        scenario=scenario,
        generator=generator,
        constants=_load_constants(args.reward_constants),
        parallel=args.parallel,
        execution=getattr(args, "execution", "scripted"),
        dump_json=bool(getattr(args, "dump_json", False)),
    )


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        config = _config_from_args(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        return args.func(config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - map any runtime failure to exit 2
        print(f"runtime failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
