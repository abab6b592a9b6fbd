"""Episode orchestration: scripted navigation, rewards, batch running.

Centralized baselines solve their assignment once at t=0 with full
information, then every agent follows a greedy waypoint controller to its
task and services the workload to completion.  All randomness is owned by
the caller through seeds; a (root seed, config) pair fully determines every
emitted number.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fairtask import assign, metrics, pathfind, world
from fairtask.world import ACCEL_STEPS, ACTION_IDLE, ARRIVAL_RADIUS

EXECUTION_SCRIPTED = "scripted"
EXECUTION_TELEPORT = "teleport"

DEFAULT_STEP_CAP = 3000
_WAYPOINT_TOLERANCE = 0.1   # waypoint capture radius when the next leg is visible
_WAYPOINT_SNAP = 0.05       # unconditional capture radius (> braking standoff)
_CORNER_SPEED_FRACTION = 0.4
_STUCK_WINDOW = 20          # steps without progress before replanning
_STUCK_DISTANCE = 0.005
_LEG_CHECK_INTERVAL = 15    # steps between leg line-of-sight revalidations


@dataclass(frozen=True)
class RewardConstants:
    eta0: float = 1.0                # exploration bonus scale
    gamma_decay: float = 0.1         # exploration bonus decay rate
    kappa: float = 1.0               # progress reward scale
    arrival_bonus: float = 5.0
    completion_bonus: float = 10.0
    collision_penalty: float = -5.0

    def __post_init__(self) -> None:
        if min(self.eta0, self.kappa, self.arrival_bonus, self.completion_bonus) < 0:
            raise ValueError("bonus scales must be non-negative")
        if self.gamma_decay < 0:
            raise ValueError("gamma_decay must be non-negative")
        if self.collision_penalty > 0:
            raise ValueError("collision_penalty must be <= 0")


@dataclass(frozen=True)
class StepEvents:
    completions: int = 0
    collisions: int = 0


@dataclass
class StepRecord:
    actions: tuple[int, ...]
    agent_rewards: np.ndarray
    joint_reward: float
    events: StepEvents


@dataclass
class PolicyTrace:
    records: list[StepRecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Reward components (pure functions)
# ---------------------------------------------------------------------------


def exploration_reward(t: float, discovered_new: bool, c: RewardConstants) -> float:
    """Time-decaying bonus paid only on a new task discovery."""
    if t < 0:
        raise ValueError("time must be non-negative")
    return c.eta0 * math.exp(-c.gamma_decay * t) if discovered_new else 0.0


def fairness_shaping(agent_pos, goal_pos, arrived_now: bool, c: RewardConstants) -> float:
    """Distance penalty toward the assigned goal plus a one-time arrival bonus."""
    d = float(np.hypot(*(np.asarray(goal_pos, float) - np.asarray(agent_pos, float))))
    return -d + (c.arrival_bonus if arrived_now else 0.0)


def progress_reward(pref: float, dt: float, c: RewardConstants, remaining: float = math.inf) -> float:
    """Reward for workload served this interval, truncated on the final tick."""
    return c.kappa * min(pref * dt, remaining)


def completion_and_collision(events: StepEvents, c: RewardConstants) -> float:
    return c.completion_bonus * events.completions + c.collision_penalty * events.collisions


# ---------------------------------------------------------------------------
# Scripted navigation
# ---------------------------------------------------------------------------


def brake_action(v: np.ndarray, quantum: float) -> int:
    """Largest-axis counter-acceleration until speed is within one quantum."""
    if float(np.hypot(v[0], v[1])) <= 0.5 * quantum:
        return ACTION_IDLE
    axis = 0 if abs(v[0]) >= abs(v[1]) else 1
    if axis == 0:
        return 1 if v[0] > 0 else 0
    return 3 if v[1] > 0 else 2


def scripted_goto_policy(
    state: world.WorldState,
    sc: world.Scenario,
    agent: int,
    goal,
    grid: pathfind.NavGrid,
    waypoints: list[np.ndarray] | None = None,
) -> int:
    """Greedy waypoint-following action selection.

    Accelerates toward the active waypoint, caps speed so the agent can slow
    for corners and stop at the goal, and idles once parked there.  When no
    waypoint chain is supplied it is recomputed from the grid; an unreachable
    goal yields idle.
    """
    p = state.agent_positions[agent]
    v = state.agent_velocities[agent]
    spec = sc.agents[agent]
    quantum = spec.max_speed / ACCEL_STEPS
    goal = np.asarray(goal, dtype=float)

    if waypoints is None:
        try:
            waypoints = pathfind.path_waypoints(grid, p, goal)
        except ValueError:
            return ACTION_IDLE
    if not waypoints:
        d_goal = float(np.hypot(*(goal - p)))
        if d_goal > ARRIVAL_RADIUS:
            return ACTION_IDLE  # unreachable goal: hold position
        return brake_action(v, quantum)

    # Speed cap from the remaining chain: slow for corners, stop at the end.
    accel = quantum / sc.dt
    chain = [p] + [np.asarray(w, dtype=float) for w in waypoints]
    v_cap = spec.max_speed
    run = 0.0
    for idx in range(1, len(chain)):
        run += float(np.hypot(*(chain[idx] - chain[idx - 1])))
        target_speed = 0.0 if idx == len(chain) - 1 else _CORNER_SPEED_FRACTION * spec.max_speed
        slack = max(run - ARRIVAL_RADIUS / 2.0, 0.0)
        v_cap = min(v_cap, math.sqrt(target_speed ** 2 + 2.0 * accel * slack))

    target = chain[1]
    delta = target - p
    dist = float(np.hypot(delta[0], delta[1]))
    if dist < 1e-12:
        return brake_action(v, quantum)
    v_des = delta / dist * v_cap
    dv = v_des - v
    if float(np.hypot(dv[0], dv[1])) <= 0.5 * quantum:
        return ACTION_IDLE
    axis = 0 if abs(dv[0]) >= abs(dv[1]) else 1
    if axis == 0:
        return 0 if dv[0] > 0 else 1
    return 2 if dv[1] > 0 else 3


class Navigator:
    """Per-agent waypoint cache with stuck detection and replanning."""

    def __init__(self, grid: pathfind.NavGrid):
        self.grid = grid
        self.goal: np.ndarray | None = None
        self.waypoints: list[np.ndarray] = []
        self._last_pos: np.ndarray | None = None
        self._stall_steps = 0
        self._steps_since_check = 0

    def set_goal(self, pos: np.ndarray, goal) -> None:
        self.goal = np.asarray(goal, dtype=float)
        self.waypoints = pathfind.path_waypoints(self.grid, pos, self.goal)
        self._last_pos = pos.copy()
        self._stall_steps = 0
        self._steps_since_check = 0

    def action(self, state: world.WorldState, sc: world.Scenario, agent: int) -> int:
        pos = state.agent_positions[agent]
        if self.goal is None:
            return brake_action(
                state.agent_velocities[agent], sc.agents[agent].max_speed / ACCEL_STEPS
            )
        self._advance(pos)
        self._check_stuck(pos)
        self._revalidate_leg(pos)
        return scripted_goto_policy(state, sc, agent, self.goal, self.grid, self.waypoints)

    def _revalidate_leg(self, pos: np.ndarray) -> None:
        # A deflected agent can end up sliding a wall while its leg crosses
        # it; periodic line-of-sight checks catch that and force a replan.
        self._steps_since_check += 1
        if self._steps_since_check < _LEG_CHECK_INTERVAL or not self.waypoints:
            return
        self._steps_since_check = 0
        if not pathfind.line_of_sight(self.grid, pos, self.waypoints[0]):
            self.set_goal(pos, self.goal)

    def _advance(self, pos: np.ndarray) -> None:
        while len(self.waypoints) > 1:
            w0 = self.waypoints[0]
            d0 = float(np.hypot(*(w0 - pos)))
            if d0 <= _WAYPOINT_SNAP:
                self.waypoints.pop(0)
                continue
            w1 = self.waypoints[1]
            passed = float(np.dot(w0 - pos, w1 - w0)) < 0.0
            if (d0 <= _WAYPOINT_TOLERANCE or passed) and pathfind.line_of_sight(
                self.grid, pos, w1
            ):  # only skip a corner the next leg can actually see past
                self.waypoints.pop(0)
                continue
            break

    def _check_stuck(self, pos: np.ndarray) -> None:
        if self._last_pos is None:
            self._last_pos = pos.copy()
            return
        if float(np.hypot(*(pos - self._last_pos))) > _STUCK_DISTANCE:
            self._last_pos = pos.copy()
            self._stall_steps = 0
            return
        self._stall_steps += 1
        if self._stall_steps >= _STUCK_WINDOW and self.goal is not None:
            self.waypoints = pathfind.path_waypoints(self.grid, pos, self.goal)
            self._stall_steps = 0


# ---------------------------------------------------------------------------
# Centralized episodes
# ---------------------------------------------------------------------------


def solve_assignment(rule: str, u0: assign.UtilityMatrix, prefs, d_star, weights) -> assign.Assignment:
    if rule == assign.RULE_EG:
        return assign.solve_eg(u0, weights)
    if rule == assign.RULE_HUNGARIAN:
        return assign.solve_hungarian_max(prefs)
    if rule == assign.RULE_MINMAX:
        return assign.solve_minmax(d_star)
    raise ValueError(f"unknown assignment rule {rule!r}")


def run_centralized_episode(
    sc: world.Scenario,
    rule: str,
    *,
    execution: str = EXECUTION_SCRIPTED,
    constants: RewardConstants | None = None,
    step_cap: int = DEFAULT_STEP_CAP,
    resolution: float = pathfind.DEFAULT_RESOLUTION,
    with_trace: bool = False,
):
    """Solve the chosen rule at t=0, execute, and summarize the episode.

    execution="teleport" skips kinematics entirely: realized distances equal
    the shortest-path distances, giving the zero-overhead reference point.
    Returns an EpisodeResult, or (EpisodeResult, PolicyTrace) with with_trace.
    """
    constants = constants or RewardConstants()
    grid = pathfind.build_nav_grid(sc, resolution)
    provider = pathfind.DistanceProvider(grid)
    d_star = provider.pairwise(sc.task_positions(), sc.agent_positions())
    prefs = world.preference_matrix(sc)
    weights = world.task_weights(sc)
    u0 = assign.compute_utility(d_star, prefs, sc.alpha)
    u_star, _ = metrics.centralized_optimum(sc, provider)
    solution = solve_assignment(rule, u0, prefs, d_star, weights)

    if execution == EXECUTION_TELEPORT:
        result = _teleport_result(sc, rule, solution, d_star, prefs, u0, weights, u_star)
        return (result, PolicyTrace()) if with_trace else result
    if execution != EXECUTION_SCRIPTED:
        raise ValueError(f"unknown execution mode {execution!r}")

    result, trace = _execute_assignment(
        sc, grid, rule, solution, weights, prefs, constants, step_cap, with_trace
    )
    result.u_star = u_star
    if not result.incomplete:
        result.u_pi = metrics.realized_value(result)
    return (result, trace) if with_trace else result


def _teleport_result(sc, rule, solution, d_star, prefs, u0, weights, u_star):
    n = sc.n_agents
    per_agent = np.zeros(n)
    realized = np.zeros(sc.n_tasks)
    t_done = 0.0
    for agent, task in solution.pairs():
        d = float(d_star[task, agent])
        per_agent[agent] = d
        realized[task] = u0.values[task, agent]
        rate = prefs[task, agent]
        service = sc.tasks[task].workload / rate if rate > 0 else math.inf
        t_done = max(t_done, d / sc.agents[agent].max_speed + service)
    result = metrics.EpisodeResult(
        realized_utilities=realized,
        weights=weights,
        completion_time=t_done,
        total_distance=float(per_agent.sum()),
        per_agent_distance=per_agent,
        collision_count=0,
        discovery_times=np.zeros(sc.n_tasks),
        assignment_log=tuple((0.0, a, t) for a, t in solution.pairs()),
        incomplete=not np.isfinite(t_done),
        rule=rule,
        u_star=u_star,
        seed=sc.seed,
    )
    if not result.incomplete:
        result.u_pi = metrics.realized_value(result)
    return result


def _execute_assignment(sc, grid, rule, solution, weights, prefs, constants, step_cap, with_trace):
    n, m = sc.n_agents, sc.n_tasks
    state = world.initial_state(sc)
    state = world.discover(state, range(m))  # centralized rules see everything
    task_of = {a: t for a, t in solution.pairs()}
    task_pos = {a: np.array(sc.tasks[t].position) for a, t in task_of.items()}
    navs: dict[int, Navigator] = {}
    for a, t in task_of.items():
        nav = Navigator(grid)
        nav.set_goal(state.agent_positions[a], task_pos[a])
        navs[a] = nav

    arrived = np.zeros(n, dtype=bool)
    realized_distance = np.full(m, math.nan)
    completion_time = 0.0
    collisions = 0
    trace = PolicyTrace() if with_trace else None

    for _step in range(step_cap):
        if np.all(state.completed):
            break
        actions = []
        for i in range(n):
            t = task_of[i]
            if state.completed[t]:
                actions.append(
                    brake_action(state.agent_velocities[i], sc.agents[i].max_speed / ACCEL_STEPS)
                )
            else:
                actions.append(navs[i].action(state, sc, i))
        state, events = world.step_dynamics_events(state, actions, sc)
        collisions += len(events)

        arrived_now = np.zeros(n, dtype=bool)
        served_amount = np.zeros(n)
        completed_by: list[int] = []
        for i in range(n):
            t = task_of[i]
            d_task = float(np.hypot(*(state.agent_positions[i] - task_pos[i])))
            if d_task <= ARRIVAL_RADIUS:
                if not arrived[i]:
                    arrived[i] = True
                    arrived_now[i] = True
                    realized_distance[t] = state.cumulative_distance[i]
                if not state.completed[t]:
                    before = float(state.remaining_workloads[t])
                    state = world.service_tick(state, sc, i, t)
                    served_amount[i] = before - float(state.remaining_workloads[t])
                    if state.completed[t]:
                        completed_by.append(i)
                        completion_time = state.time
        if trace is not None:
            trace.records.append(
                _trace_step(sc, state, actions, task_of, task_pos, arrived_now,
                            served_amount, events, completed_by, constants)
            )

    incomplete = not bool(np.all(state.completed))
    realized = np.zeros(m)
    for a, t in task_of.items():
        if np.isfinite(realized_distance[t]):
            realized[t] = (sc.alpha ** realized_distance[t]) * prefs[t, a]
    result = metrics.EpisodeResult(
        realized_utilities=realized,
        weights=weights,
        completion_time=completion_time if not incomplete else state.time,
        total_distance=float(state.cumulative_distance.sum()),
        per_agent_distance=state.cumulative_distance.copy(),
        collision_count=collisions,
        discovery_times=np.zeros(m),
        assignment_log=tuple((0.0, a, t) for a, t in solution.pairs()),
        incomplete=incomplete,
        rule=rule,
        seed=sc.seed,
    )
    return result, trace


def _trace_step(sc, state, actions, task_of, task_pos, arrived_now, served_amount,
                events, completed_by, constants):
    n = sc.n_agents
    rewards = np.zeros(n)
    for i in range(n):
        rewards[i] += fairness_shaping(
            state.agent_positions[i], task_pos[i], bool(arrived_now[i]), constants
        )
        rewards[i] += constants.kappa * served_amount[i]
    # A completion credits the agent whose tick finished the task; collision
    # penalties hit the first agent of each event so the joint sum counts
    # each event exactly once.
    for i in completed_by:
        rewards[i] += constants.completion_bonus
    for ev in events:
        rewards[ev.agents[0]] += constants.collision_penalty
    step_events = StepEvents(completions=len(completed_by), collisions=len(events))
    return StepRecord(
        actions=tuple(int(a) for a in actions),
        agent_rewards=rewards,
        joint_reward=float(rewards.sum()),
        events=step_events,
    )


# ---------------------------------------------------------------------------
# Batch running
# ---------------------------------------------------------------------------


def episode_seed(root_seed: int, index: int) -> int:
    """Counter-derived per-episode seed, reproducible in isolation."""
    return int(np.random.SeedSequence([root_seed, index]).generate_state(1, np.uint64)[0])


@dataclass
class BatchResult:
    rows: list[metrics.EpisodeResult]
    summary: dict


def _run_one_episode(args) -> metrics.EpisodeResult:
    (index, root_seed, algorithm, k, generator, scenario, constants,
     execution, step_cap, resolution) = args
    seed = episode_seed(root_seed, index)
    sc = scenario if scenario is not None else world.generate_scenario(seed=seed, **generator)
    if algorithm == "online":
        from fairtask import online  # deferred: online builds on this module

        rng = np.random.default_rng([seed, 1])
        result = online.run_online_episode(
            sc, k, rng, step_cap=step_cap, resolution=resolution, constants=constants
        )
    else:
        result = run_centralized_episode(
            sc, algorithm, execution=execution, constants=constants,
            step_cap=step_cap, resolution=resolution,
        )
        result.k = k
    result.episode = index
    result.seed = seed
    return result


def batch_run(
    *,
    algorithm: str,
    episodes: int,
    root_seed: int,
    generator: dict | None = None,
    scenario: world.Scenario | None = None,
    k: int | None = None,
    constants: RewardConstants | None = None,
    execution: str = EXECUTION_SCRIPTED,
    step_cap: int = DEFAULT_STEP_CAP,
    resolution: float = pathfind.DEFAULT_RESOLUTION,
    parallel: int = 1,
) -> BatchResult:
    """Run a seeded episode family and aggregate summary statistics.

    Episode i draws its own seed from (root_seed, i), so any single episode
    can be reproduced in isolation.  Incomplete episodes are kept in the rows
    and counted, but excluded from the regret aggregate (a capped episode has
    no realized value).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if (scenario is None) == (generator is None):
        raise ValueError("pass exactly one of scenario or generator")
    if algorithm == "online":
        n = scenario.n_agents if scenario is not None else generator["n_agents"]
        if k is None or not 1 <= k <= n:
            raise ValueError(f"online runs need 1 <= k <= {n}")
    jobs = [
        (i, root_seed, algorithm, k, generator, scenario, constants,
         execution, step_cap, resolution)
        for i in range(episodes)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_run_one_episode, jobs))
    else:
        rows = [_run_one_episode(j) for j in jobs]
    rows.sort(key=lambda r: r.episode)
    return BatchResult(rows=rows, summary=summarize(rows))


def episode_stats(result: metrics.EpisodeResult) -> dict:
    """Per-episode scalar metrics used for CSV rows and summaries."""
    ratios = metrics.rho(result)
    positive = bool(np.any(ratios > 0))
    return {
        "T": result.completion_time,
        "D": result.total_distance,
        "F_rho": metrics.fairness_cv(ratios) if ratios.size >= 2 else math.nan,
        "jain": metrics.jain(ratios) if positive else math.nan,
        "U_star": result.u_star,
        "U_pi": result.u_pi,
        "regret": result.regret_gap,
        "collisions": result.collision_count,
        "incomplete": result.incomplete,
    }


def summarize(rows) -> dict:
    stats = [episode_stats(r) for r in rows]
    complete = [s for s in stats if not s["incomplete"]]
    keys = ("T", "D", "F_rho", "jain", "regret")

    def _agg(fn):
        out = {}
        for key in keys:
            vals = [s[key] for s in complete if math.isfinite(s[key])]
            out[key] = float(fn(vals)) if vals else math.nan
        return out

    return {
        "episodes": len(rows),
        "complete": len(complete),
        "incomplete": len(rows) - len(complete),
        "mean": _agg(np.mean),
        "std": _agg(np.std),
    }
