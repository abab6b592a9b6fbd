"""Online explore-and-assign: lattice exploration plus subset-based assignment.

Free agents sweep a shared lattice (spacing = half the smallest sensing
radius), sampling targets with a distance softmax.  Whenever the pool of
discovered-but-unassigned tasks reaches k (or everything is discovered),
the best k-agent subset by weighted-log objective is committed to those
tasks, and the loop continues until every task is served.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from fairtask import assign, engine, metrics, pathfind, world
from fairtask.world import ARRIVAL_RADIUS

_TARGET_RADIUS = 0.05  # lattice target capture distance


@dataclass
class ExplorationMap:
    """Shared lattice of explored/unexplored points.

    Points pre-marked explored at construction are unreachable (inside an
    obstacle or a blocked grid cell) and never sampled.  Explored flags are
    monotone: nothing ever unmarks a point.
    """

    points: np.ndarray        # (P, 2)
    explored: np.ndarray      # (P,) bool
    grid_width: float

    def copy(self) -> "ExplorationMap":
        return ExplorationMap(self.points.copy(), self.explored.copy(), self.grid_width)

    @property
    def n_unexplored(self) -> int:
        return int((~self.explored).sum())


def init_lattice(sc: world.Scenario, grid: pathfind.NavGrid | None = None) -> ExplorationMap:
    """Square lattice over the workspace at half the smallest sensing radius."""
    g = min(a.sensing_radius for a in sc.agents) / 2.0
    size = sc.workspace_size
    coords = np.minimum(np.arange(math.ceil(size / g) + 1) * g, size)
    xs, ys = np.meshgrid(coords, coords, indexing="ij")
    points = np.column_stack([xs.ravel(), ys.ravel()])
    explored = np.zeros(len(points), dtype=bool)
    for idx, (px, py) in enumerate(points):
        for (cx, cy), r in sc.obstacles:
            if math.hypot(px - cx, py - cy) <= r:
                explored[idx] = True
                break
        else:
            if grid is not None and not grid.is_free((px, py)):
                explored[idx] = True  # unreachable: wall-adjacent blocked cell
    return ExplorationMap(points=points, explored=explored, grid_width=g)


def sample_target(emap: ExplorationMap, agent_pos, rng: np.random.Generator):
    """Draw an unexplored lattice point with probability softmax(-distance).

    The drawn point is immediately marked explored so no other agent picks
    it.  Returns None when exploration is already complete.
    """
    candidates = np.flatnonzero(~emap.explored)
    if candidates.size == 0:
        return None
    deltas = emap.points[candidates] - np.asarray(agent_pos, dtype=float)
    dists = np.hypot(deltas[:, 0], deltas[:, 1])
    logits = np.exp(-dists)
    probs = logits / logits.sum()
    choice = int(rng.choice(candidates, p=probs))
    emap.explored[choice] = True
    return emap.points[choice].copy()


def mark_swept(emap: ExplorationMap, agent_pos, radius: float) -> ExplorationMap:
    """Mark every lattice point within the closed sensing ball (in place)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    deltas = emap.points - np.asarray(agent_pos, dtype=float)
    emap.explored |= np.hypot(deltas[:, 0], deltas[:, 1]) <= radius
    return emap


@dataclass
class OnlineEpisodeState:
    discovered_tasks: set[int]
    assigned_tasks: set[int]
    free_agents: set[int]
    agent_targets: dict[int, np.ndarray]
    k: int

    @property
    def pending_tasks(self) -> list[int]:
        return sorted(self.discovered_tasks - self.assigned_tasks)


@dataclass(frozen=True)
class PartialAssignment:
    pairs: tuple[tuple[int, int], ...]  # (agent, task)
    agents: tuple[int, ...]
    objective: float


@dataclass(frozen=True)
class TriggerRecord:
    """Snapshot of one assignment trigger, sufficient to recompute it."""

    time: float
    free_agents: tuple[int, ...]
    pending_tasks: tuple[int, ...]
    agent_positions: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    objective: float


def select_subset_and_assign(
    free_agents,
    pending_tasks,
    k: int,
    sc: world.Scenario,
    provider: pathfind.DistanceProvider,
    agent_positions: np.ndarray,
) -> PartialAssignment:
    """Best agent subset for the pending tasks by weighted-log objective.

    Enumerates every |pending|-sized subset of the free agents, solves the
    one-to-one weighted-log assignment on each (shortest-path distances from
    current positions), and commits the argmax.  Ties go to the earliest
    subset in lexicographic agent order.  The C(t, k) enumeration is exact
    and unpruned; practical up to roughly t <= 20, k <= 7.
    """
    pending = sorted(pending_tasks)
    free = sorted(free_agents)
    if len(pending) > k:
        raise RuntimeError(f"{len(pending)} pending tasks exceed the threshold {k}")
    if len(pending) == k and len(free) < k:
        raise RuntimeError("fewer free agents than the subset size")
    size = len(pending)
    prefs = world.preference_matrix(sc)
    weights = world.task_weights(sc)
    task_pos = sc.task_positions()[pending]

    best: PartialAssignment | None = None
    for subset in itertools.combinations(free, size):
        d = provider.pairwise(task_pos, agent_positions[list(subset)])
        u = assign.compute_utility(d, prefs[np.ix_(pending, list(subset))], sc.alpha)
        solution = assign.solve_eg(u, weights[pending])
        if best is None or solution.objective > best.objective:
            pairs = tuple(
                (subset[i], pending[int(solution.task_of_agent[i])]) for i in range(size)
            )
            best = PartialAssignment(pairs=pairs, agents=subset, objective=solution.objective)
    assert best is not None
    return best


def _next_reachable_target(emap, nav, pos, rng):
    """Sample fresh targets until one is reachable (or the map is spent).

    Lattice points in pockets the grid cannot route to are consumed here
    (they were already marked explored by sampling) and skipped.
    """
    while True:
        target = sample_target(emap, pos, rng)
        if target is None:
            return None
        if float(np.hypot(*(pos - target))) <= _TARGET_RADIUS:
            continue  # already standing on it
        nav.set_goal(pos, target)
        if nav.waypoints:
            return target


def run_online_episode(
    sc: world.Scenario,
    k: int,
    rng: np.random.Generator,
    *,
    step_cap: int = engine.DEFAULT_STEP_CAP,
    resolution: float = pathfind.DEFAULT_RESOLUTION,
    constants: engine.RewardConstants | None = None,
) -> metrics.EpisodeResult:
    """Alternate exploration and assignment until every task is served.

    Discoveries commit one task at a time, so the pending pool never
    overshoots k.  Assigned agents are redirected immediately and stop
    sweeping the lattice; only free agents explore.  constants is accepted
    for batch-interface parity; online episodes do not trace rewards.
    """
    if not 1 <= k <= sc.n_agents:
        raise ValueError(f"k must lie in [1, {sc.n_agents}], got {k}")
    grid = pathfind.build_nav_grid(sc, resolution)
    provider = pathfind.DistanceProvider(grid)
    u_star, _ = metrics.centralized_optimum(sc, provider)
    prefs = world.preference_matrix(sc)
    weights = world.task_weights(sc)
    n, m = sc.n_agents, sc.n_tasks

    emap = init_lattice(sc, grid)
    state = world.initial_state(sc)
    ep = OnlineEpisodeState(
        discovered_tasks=set(), assigned_tasks=set(),
        free_agents=set(range(n)), agent_targets={}, k=k,
    )
    navs = {i: engine.Navigator(grid) for i in range(n)}
    task_of: dict[int, int] = {}
    task_pos_all = sc.task_positions()
    discovery_times = np.full(m, math.nan)
    dist_at_assign = np.zeros(n)
    realized_distance = np.full(m, math.nan)
    arrived = np.zeros(n, dtype=bool)
    assignment_log: list[tuple[float, int, int]] = []
    triggers: list[TriggerRecord] = []
    collisions = 0
    completion_time = 0.0

    def _commit(partial: PartialAssignment) -> None:
        triggers.append(
            TriggerRecord(
                time=state.time,
                free_agents=tuple(sorted(ep.free_agents)),
                pending_tasks=tuple(ep.pending_tasks),
                agent_positions=state.agent_positions.copy(),
                pairs=partial.pairs,
                objective=partial.objective,
            )
        )
        for agent, task in partial.pairs:
            task_of[agent] = task
            ep.free_agents.discard(agent)
            ep.assigned_tasks.add(task)
            ep.agent_targets.pop(agent, None)
            dist_at_assign[agent] = float(state.cumulative_distance[agent])
            assignment_log.append((state.time, agent, task))
            navs[agent].set_goal(state.agent_positions[agent], task_pos_all[task])

    def _process_discoveries() -> None:
        # One task at a time so the pending pool triggers at exactly k.
        for j in world.newly_visible_tasks(state, sc):
            state.discovered[j] = True
            discovery_times[j] = state.time
            ep.discovered_tasks.add(j)
            pending = ep.pending_tasks
            if len(pending) == k or len(ep.discovered_tasks) == m:
                _commit(
                    select_subset_and_assign(
                        ep.free_agents, pending, k, sc, provider, state.agent_positions
                    )
                )

    # Initial sensing before any motion.
    for i in sorted(ep.free_agents):
        mark_swept(emap, state.agent_positions[i], sc.agents[i].sensing_radius)
    _process_discoveries()

    for _step in range(step_cap):
        if np.all(state.completed):
            break
        actions = []
        for i in range(n):
            if i in task_of:
                t = task_of[i]
                if state.completed[t]:
                    actions.append(engine.brake_action(
                        state.agent_velocities[i], sc.agents[i].max_speed / world.ACCEL_STEPS
                    ))
                else:
                    actions.append(navs[i].action(state, sc, i))
                continue
            # Free agent: keep an exploration target while any point remains.
            target = ep.agent_targets.get(i)
            if target is None or float(np.hypot(*(state.agent_positions[i] - target))) <= _TARGET_RADIUS:
                target = _next_reachable_target(emap, navs[i], state.agent_positions[i], rng)
                if target is None:
                    ep.agent_targets.pop(i, None)
                    actions.append(engine.brake_action(
                        state.agent_velocities[i], sc.agents[i].max_speed / world.ACCEL_STEPS
                    ))
                    continue
                ep.agent_targets[i] = target
            actions.append(navs[i].action(state, sc, i))

        state, events = world.step_dynamics_events(state, actions, sc)
        collisions += len(events)
        for i in sorted(ep.free_agents):
            mark_swept(emap, state.agent_positions[i], sc.agents[i].sensing_radius)
        _process_discoveries()

        for i in range(n):
            t = task_of.get(i)
            if t is None:
                continue
            d_task = float(np.hypot(*(state.agent_positions[i] - task_pos_all[t])))
            if d_task <= ARRIVAL_RADIUS:
                if not arrived[i]:
                    arrived[i] = True
                    realized_distance[t] = state.cumulative_distance[i] - dist_at_assign[i]
                if not state.completed[t]:
                    state = world.service_tick(state, sc, i, t)
                    if state.completed[t]:
                        completion_time = state.time

    incomplete = not bool(np.all(state.completed))
    realized = np.zeros(m)
    for agent, task in task_of.items():
        if np.isfinite(realized_distance[task]):
            realized[task] = (sc.alpha ** realized_distance[task]) * prefs[task, agent]
    result = metrics.EpisodeResult(
        realized_utilities=realized,
        weights=weights,
        completion_time=completion_time if not incomplete else state.time,
        total_distance=float(state.cumulative_distance.sum()),
        per_agent_distance=state.cumulative_distance.copy(),
        collision_count=collisions,
        discovery_times=discovery_times,
        assignment_log=tuple(assignment_log),
        incomplete=incomplete,
        rule="online",
        k=k,
        u_star=u_star,
        seed=sc.seed,
        online_triggers=tuple(triggers),
    )
    if not incomplete:
        result.u_pi = metrics.realized_value(result)
    return result
