"""2-D navigation-and-service world: entities, kinematics, sensing, workloads.

Coordinates are world units inside the square [0, workspace_size]^2; time
advances in fixed dt steps.  Walls are zero-width segments, obstacles are
static discs.  Step functions treat WorldState as a value: they return fresh
states and never mutate their input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Discrete action space: one acceleration quantum along an axis, or idle.
ACTION_VECTORS = np.array(
    [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.0, 0.0]]
)
ACTION_ACCEL_PX, ACTION_ACCEL_NX, ACTION_ACCEL_PY, ACTION_ACCEL_NY, ACTION_IDLE = range(5)

ACCEL_STEPS = 4          # quanta from rest to max speed; quantum = max_speed / 4
ARRIVAL_RADIUS = 0.05    # service contact threshold (world units)
AGENT_RADIUS = 0.05      # agent-agent contact counting radius
MIN_CLEARANCE = 0.1      # rejection-sampling clearance used by the generator

_WALL_ANGLES_DEG = (0.0, 45.0, 90.0, 135.0)
_SURFACE_BACKOFF = 1e-9  # stop just short of a hit surface to avoid re-penetration


class ScenarioError(ValueError):
    """Raised when a scenario violates its structural invariants."""


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start_position: tuple[float, float]
    agent_type: int
    sensing_radius: float
    max_speed: float
    preference_row: tuple[float, ...]  # indexed by task type


@dataclass(frozen=True)
class TaskSpec:
    id: int
    position: tuple[float, float]
    task_type: int
    workload: float
    weight: float


@dataclass(frozen=True)
class Scenario:
    """Immutable episode definition.

    walls are ((x1, y1), (x2, y2)) endpoint pairs; obstacles are
    ((cx, cy), radius) discs.  The workspace boundary itself acts as four
    implicit walls during motion but is not part of `walls`.
    """

    workspace_size: float
    walls: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    obstacles: tuple[tuple[tuple[float, float], float], ...]
    agents: tuple[AgentSpec, ...]
    tasks: tuple[TaskSpec, ...]
    seed: int
    dt: float = 0.1
    alpha: float = 0.97

    def __post_init__(self) -> None:
        validate_scenario(self)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_agent_types(self) -> int:
        return max(a.agent_type for a in self.agents) + 1

    def agent_positions(self) -> np.ndarray:
        return np.array([a.start_position for a in self.agents], dtype=float)

    def task_positions(self) -> np.ndarray:
        return np.array([t.position for t in self.tasks], dtype=float)

    def wall_segments(self, include_boundary: bool = True) -> np.ndarray:
        """All wall segments as an array of shape (W, 2, 2)."""
        s = float(self.workspace_size)
        segs = [((x1, y1), (x2, y2)) for (x1, y1), (x2, y2) in self.walls]
        if include_boundary:
            segs += [
                ((0.0, 0.0), (s, 0.0)),
                ((s, 0.0), (s, s)),
                ((s, s), (0.0, s)),
                ((0.0, s), (0.0, 0.0)),
            ]
        if not segs:
            return np.zeros((0, 2, 2))
        return np.array(segs, dtype=float)


def validate_scenario(sc: Scenario) -> None:
    if sc.workspace_size <= 0:
        raise ScenarioError("workspace_size must be positive")
    if not 0.0 < sc.alpha < 1.0:
        raise ScenarioError(f"alpha must lie in (0, 1), got {sc.alpha}")
    if sc.dt <= 0:
        raise ScenarioError("dt must be positive")
    if len(sc.agents) != len(sc.tasks):
        raise ScenarioError(
            f"agent/task counts must match, got {len(sc.agents)} vs {len(sc.tasks)}"
        )
    if not sc.agents:
        raise ScenarioError("scenario needs at least one agent")
    s = sc.workspace_size
    for a in sc.agents:
        if a.sensing_radius <= 0 or a.max_speed <= 0:
            raise ScenarioError(f"agent {a.id}: sensing_radius and max_speed must be positive")
        if any(p < 0 for p in a.preference_row):
            raise ScenarioError(f"agent {a.id}: preference entries must be >= 0")
        _check_inside(a.start_position, s, f"agent {a.id}")
    for t in sc.tasks:
        if t.workload <= 0 or t.weight <= 0:
            raise ScenarioError(f"task {t.id}: workload and weight must be positive")
        _check_inside(t.position, s, f"task {t.id}")
        if t.task_type >= min(len(a.preference_row) for a in sc.agents):
            raise ScenarioError(f"task {t.id}: type {t.task_type} exceeds preference rows")
    for (cx, cy), r in sc.obstacles:
        if r <= 0:
            raise ScenarioError("obstacle radius must be positive")
        for a in sc.agents:
            if math.dist(a.start_position, (cx, cy)) < r:
                raise ScenarioError(f"agent {a.id} starts inside an obstacle")
        for t in sc.tasks:
            if math.dist(t.position, (cx, cy)) < r:
                raise ScenarioError(f"task {t.id} lies inside an obstacle")


def _check_inside(pos: tuple[float, float], size: float, label: str) -> None:
    x, y = pos
    if not (0.0 < x < size and 0.0 < y < size):
        raise ScenarioError(f"{label} position {pos} not strictly inside workspace")


def preference_matrix(sc: Scenario) -> np.ndarray:
    """Service-rate matrix pref[j, i] = agent i's rate for task j's type."""
    return np.array(
        [[a.preference_row[t.task_type] for a in sc.agents] for t in sc.tasks],
        dtype=float,
    )


def task_weights(sc: Scenario) -> np.ndarray:
    return np.array([t.weight for t in sc.tasks], dtype=float)


def type_preference_column(sc: Scenario, task: int) -> np.ndarray:
    """Per-agent-type service rate for one task (mean over agents of a type)."""
    tt = sc.tasks[task].task_type
    col = np.zeros(sc.n_agent_types)
    for g in range(sc.n_agent_types):
        rates = [a.preference_row[tt] for a in sc.agents if a.agent_type == g]
        if rates:
            col[g] = float(np.mean(rates))
    return col


# ---------------------------------------------------------------------------
# World state and dynamics
# ---------------------------------------------------------------------------


@dataclass
class WorldState:
    time: float
    agent_positions: np.ndarray      # (N, 2)
    agent_velocities: np.ndarray     # (N, 2)
    remaining_workloads: np.ndarray  # (m,)
    progress: np.ndarray             # (m,)
    discovered: np.ndarray           # (m,) bool
    completed: np.ndarray            # (m,) bool
    last_server: np.ndarray          # (m,) int, -1 when unserved
    cumulative_distance: np.ndarray  # (N,)

    def copy(self) -> "WorldState":
        return WorldState(
            time=self.time,
            agent_positions=self.agent_positions.copy(),
            agent_velocities=self.agent_velocities.copy(),
            remaining_workloads=self.remaining_workloads.copy(),
            progress=self.progress.copy(),
            discovered=self.discovered.copy(),
            completed=self.completed.copy(),
            last_server=self.last_server.copy(),
            cumulative_distance=self.cumulative_distance.copy(),
        )


def initial_state(sc: Scenario) -> WorldState:
    n, m = sc.n_agents, sc.n_tasks
    return WorldState(
        time=0.0,
        agent_positions=sc.agent_positions(),
        agent_velocities=np.zeros((n, 2)),
        remaining_workloads=np.array([t.workload for t in sc.tasks], dtype=float),
        progress=np.zeros(m),
        discovered=np.zeros(m, dtype=bool),
        completed=np.zeros(m, dtype=bool),
        last_server=np.full(m, -1, dtype=int),
        cumulative_distance=np.zeros(n),
    )


@dataclass(frozen=True)
class CollisionEvent:
    kind: str                 # "wall" | "obstacle" | "agent"
    agents: tuple[int, ...]   # one index for geometry hits, a pair for contacts


def step_dynamics(state: WorldState, joint_action, sc: Scenario) -> WorldState:
    """Advance one timestep: accelerate, clamp speed, integrate, clip geometry."""
    new_state, _ = step_dynamics_events(state, joint_action, sc)
    return new_state


def step_dynamics_events(
    state: WorldState, joint_action, sc: Scenario
) -> tuple[WorldState, list[CollisionEvent]]:
    """step_dynamics plus the collision events needed for rewards/accounting."""
    n = sc.n_agents
    actions = np.asarray(joint_action, dtype=int)
    if actions.shape != (n,):
        raise ValueError(f"expected {n} actions, got shape {actions.shape}")
    out = state.copy()
    walls = sc.wall_segments(include_boundary=True)
    events: list[CollisionEvent] = []

    for i in range(n):
        spec = sc.agents[i]
        quantum = spec.max_speed / ACCEL_STEPS
        v = out.agent_velocities[i] + quantum * ACTION_VECTORS[actions[i]]
        speed = float(np.hypot(v[0], v[1]))
        if speed > spec.max_speed:
            v = v * (spec.max_speed / speed)
        p = out.agent_positions[i]
        disp = v * sc.dt
        new_p, normal = _clip_motion(p, disp, walls, sc.obstacles)
        if normal is not None:
            kind, n_hat = normal
            v = v - np.dot(v, n_hat) * n_hat
            events.append(CollisionEvent(kind=kind, agents=(i,)))
        out.cumulative_distance[i] += float(np.hypot(*(new_p - p)))
        out.agent_positions[i] = new_p
        out.agent_velocities[i] = v

    # Agent-agent contacts never block motion; they are only counted.
    for i in range(n):
        for k in range(i + 1, n):
            gap = out.agent_positions[i] - out.agent_positions[k]
            if float(np.hypot(gap[0], gap[1])) < 2.0 * AGENT_RADIUS:
                events.append(CollisionEvent(kind="agent", agents=(i, k)))

    out.time = state.time + sc.dt
    return out, events


def _clip_motion(p, disp, walls, obstacles, allow_slide: bool = True):
    """First contact of the motion segment p -> p+disp against walls/discs.

    Returns (final_position, hit) where hit is None or (kind, outward_normal).
    The final position backs off the surface by a hair so the next step does
    not start in penetration.  An agent already pressed on a surface (contact
    at the very start of the step) keeps the tangential part of its motion,
    sliding along the surface; a mid-step hit stops dead at the contact.
    """
    dx, dy = float(disp[0]), float(disp[1])
    if dx == 0.0 and dy == 0.0:
        return p.copy(), None
    best_t = math.inf
    best = None  # (kind, normal)

    for w in range(walls.shape[0]):
        hit = _segment_hit(p, disp, walls[w, 0], walls[w, 1])
        if hit is not None and hit[0] < best_t:
            best_t, best = hit[0], ("wall", hit[1])

    for (cx, cy), r in obstacles:
        hit = _circle_hit(p, disp, np.array([cx, cy]), r)
        if hit is not None and hit[0] < best_t:
            best_t, best = hit[0], ("obstacle", hit[1])

    if best is None or best_t > 1.0:
        return p + disp, None
    length = math.hypot(dx, dy)
    if allow_slide and best_t * length < 10.0 * _SURFACE_BACKOFF:
        n_hat = best[1]
        tangential = disp - np.dot(disp, n_hat) * n_hat
        if math.hypot(tangential[0], tangential[1]) > 1e-12:
            slid, _ = _clip_motion(p, tangential, walls, obstacles, allow_slide=False)
            return slid, best
        return p.copy(), best
    t_stop = max(best_t - _SURFACE_BACKOFF / length, 0.0)
    return p + disp * t_stop, best


def _segment_hit(p, disp, w1, w2):
    """Parametric crossing of motion ray against one wall segment."""
    r = disp
    s = w2 - w1
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-15:
        return None  # parallel motion slides along the wall
    qp = w1 - p
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if not (0.0 <= t <= 1.0 and -1e-12 <= u <= 1.0 + 1e-12):
        return None
    n_hat = np.array([-s[1], s[0]])
    n_hat /= math.hypot(n_hat[0], n_hat[1])
    if np.dot(n_hat, r) > 0:
        n_hat = -n_hat
    return float(t), n_hat


def _circle_hit(p, disp, center, radius):
    """Earliest entry of the motion segment into a disc, if any."""
    f = p - center
    a = float(np.dot(disp, disp))
    if a < 1e-30:
        return None
    b = 2.0 * float(np.dot(f, disp))
    c = float(np.dot(f, f)) - radius * radius
    if c < 0:
        return None  # already inside (prevented elsewhere); do not trap
    disc = b * b - 4.0 * a * c
    if disc <= 0:
        return None
    t0 = (-b - math.sqrt(disc)) / (2.0 * a)
    if not 0.0 <= t0 <= 1.0:
        return None
    contact = p + disp * t0
    n_hat = (contact - center) / radius
    return float(t0), n_hat


# ---------------------------------------------------------------------------
# Sensing, discovery, service
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VisibleSet:
    agents: tuple[int, ...]
    tasks: tuple[int, ...]
    obstacles: tuple[int, ...]


def sense(state: WorldState, sc: Scenario, agent: int) -> VisibleSet:
    """Entities within the agent's closed sensing ball (self excluded)."""
    p = state.agent_positions[agent]
    r = sc.agents[agent].sensing_radius
    agents = tuple(
        i
        for i in range(sc.n_agents)
        if i != agent and float(np.hypot(*(state.agent_positions[i] - p))) <= r
    )
    tasks = tuple(
        j for j in range(sc.n_tasks) if math.dist(sc.tasks[j].position, tuple(p)) <= r
    )
    obstacles = tuple(
        k for k, ((cx, cy), _) in enumerate(sc.obstacles) if math.dist((cx, cy), tuple(p)) <= r
    )
    return VisibleSet(agents=agents, tasks=tasks, obstacles=obstacles)


def newly_visible_tasks(state: WorldState, sc: Scenario) -> list[int]:
    """Undiscovered tasks currently inside some agent's sensing ball."""
    found = []
    for j in range(sc.n_tasks):
        if state.discovered[j]:
            continue
        tp = np.array(sc.tasks[j].position)
        for i in range(sc.n_agents):
            d = float(np.hypot(*(state.agent_positions[i] - tp)))
            if d <= sc.agents[i].sensing_radius:
                found.append(j)
                break
    return found


def discover(state: WorldState, tasks) -> WorldState:
    out = state.copy()
    for j in tasks:
        out.discovered[j] = True
    return out


def service_tick(state: WorldState, sc: Scenario, agent: int, task: int) -> WorldState:
    """One service interval: workload drops by the agent's rate times dt.

    Servicing an already-completed task is a no-op (callers flag it in their
    trace).  Range and discovery preconditions are enforced.
    """
    if state.completed[task]:
        return state.copy()
    if not state.discovered[task]:
        raise ValueError(f"task {task} serviced before discovery")
    p = state.agent_positions[agent]
    if math.dist(tuple(p), sc.tasks[task].position) > ARRIVAL_RADIUS + 1e-12:
        raise ValueError(f"agent {agent} outside arrival radius of task {task}")
    rate = sc.agents[agent].preference_row[sc.tasks[task].task_type]
    out = state.copy()
    amount = min(rate * sc.dt, float(out.remaining_workloads[task]))
    out.remaining_workloads[task] -= amount
    out.progress[task] += amount
    out.last_server[task] = agent
    if out.remaining_workloads[task] <= 0.0:
        out.remaining_workloads[task] = 0.0
        out.completed[task] = True
    return out


def occupancy(state: WorldState, sc: Scenario, task: int) -> float:
    """1 minus the nearest agent distance; unclamped outside [0, 1]."""
    tp = np.array(sc.tasks[task].position)
    dists = np.hypot(*(state.agent_positions - tp).T)
    return 1.0 - float(dists.min())


def observation_block_size(sc: Scenario) -> int:
    # rel pos (2) + utility (1) + per-type preference column + eta + h + weight
    return 2 + 1 + sc.n_agent_types + 3


def build_observation(state: WorldState, sc: Scenario, agent: int) -> np.ndarray:
    """Egocentric task feature vector, zero-padded for unseen tasks.

    One fixed-size block per task: [rel_x, rel_y, u_ji, pref column over
    agent types, eta_j, h_j, w_j].  Utility uses the straight-line distance
    per the utility model in `assign`.
    """
    from fairtask import assign  # local import: assign is pure math below world

    block = observation_block_size(sc)
    obs = np.zeros(sc.n_tasks * block)
    p = state.agent_positions[agent]
    r = sc.agents[agent].sensing_radius
    dists = np.array(
        [[math.dist(tuple(state.agent_positions[i]), t.position) for i in range(sc.n_agents)]
         for t in sc.tasks]
    )
    u = assign.compute_utility(dists, preference_matrix(sc), sc.alpha)
    for j, t in enumerate(sc.tasks):
        if math.dist(tuple(p), t.position) > r:
            continue
        rel = np.array(t.position) - p
        col = type_preference_column(sc, j)
        h_j = float(state.last_server[j])
        blk = np.concatenate(
            [rel, [u.values[j, agent]], col, [occupancy(state, sc, j), h_j, t.weight]]
        )
        obs[j * block:(j + 1) * block] = blk
    return obs


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------

DEFAULT_MAP_SIZES = {3: 2.5, 7: 2.7, 10: 2.9}


def generate_scenario(
    n_agents: int,
    map_size: float | None = None,
    *,
    seed: int,
    n_obstacles: int = 3,
    n_walls: int = 2,
    n_types: int = 3,
    sensing_radius: float = 0.5,
    max_speed: float = 1.0,
    dt: float = 0.1,
    alpha: float = 0.97,
    workload_range: tuple[float, float] = (0.5, 1.5),
    weight_range: tuple[float, float] = (0.5, 2.0),
    preference_range: tuple[float, float] = (0.2, 1.0),
    preference_table: np.ndarray | None = None,
    max_attempts: int = 80,
) -> Scenario:
    """Sample a random usable scenario (rejection sampling, fully seeded).

    Entity positions keep MIN_CLEARANCE from each other, from walls, and from
    obstacle surfaces; wall orientations come from {0, 45, 90, 135} degrees.
    Candidate scenarios where some agent-task pair is unreachable on the
    navigation grid are resampled.  Agent/task types cycle through
    range(n_types) so every generated team is heterogeneous.
    """
    from fairtask import pathfind  # deferred: pathfind depends on this module

    if map_size is None:
        try:
            map_size = DEFAULT_MAP_SIZES[n_agents]
        except KeyError:
            raise ValueError(
                f"no default map size for N={n_agents}; pass map_size explicitly"
            ) from None
    rng = np.random.default_rng(seed)
    types = min(n_types, n_agents)
    if preference_table is None:
        lo, hi = preference_range
        preference_table = rng.uniform(lo, hi, size=(types, types))
    preference_table = np.asarray(preference_table, dtype=float)

    last_err: Exception | None = None
    for _ in range(max_attempts):
        sc = _sample_candidate(
            n_agents, float(map_size), rng, n_obstacles, n_walls, types,
            sensing_radius, max_speed, dt, alpha,
            workload_range, weight_range, preference_table, seed,
        )
        if sc is None:
            continue
        try:
            grid = pathfind.build_nav_grid(sc, pathfind.DEFAULT_RESOLUTION)
        except pathfind.GridPlacementError as err:
            last_err = err
            continue
        if _fully_connected(sc, grid):
            return sc
    raise ScenarioError(f"could not generate a usable scenario (last: {last_err})")


def _fully_connected(sc: Scenario, grid) -> bool:
    from fairtask import pathfind

    provider = pathfind.DistanceProvider(grid)
    d = provider.pairwise(sc.task_positions(), sc.agent_positions())
    return bool(np.all(np.isfinite(d)))


def _sample_candidate(
    n, size, rng, n_obstacles, n_walls, types,
    sensing_radius, max_speed, dt, alpha,
    workload_range, weight_range, preference_table, seed,
):
    obstacles = []
    for _ in range(n_obstacles):
        for _try in range(200):
            r = float(rng.uniform(0.08, 0.18))
            c = rng.uniform(r + MIN_CLEARANCE, size - r - MIN_CLEARANCE, size=2)
            if all(
                math.dist(tuple(c), oc) >= r + orad + MIN_CLEARANCE
                for oc, orad in obstacles
            ):
                obstacles.append((tuple(float(x) for x in c), r))
                break
        else:
            return None

    walls = []
    for _ in range(n_walls):
        ang = math.radians(float(rng.choice(_WALL_ANGLES_DEG)))
        length = float(rng.uniform(0.4, 0.9))
        mid = rng.uniform(0.3, size - 0.3, size=2)
        dvec = np.array([math.cos(ang), math.sin(ang)]) * (length / 2.0)
        a = np.clip(mid - dvec, 0.05, size - 0.05)
        b = np.clip(mid + dvec, 0.05, size - 0.05)
        walls.append((tuple(float(x) for x in a), tuple(float(x) for x in b)))

    placed: list[np.ndarray] = []

    def _sample_point():
        for _try in range(400):
            p = rng.uniform(MIN_CLEARANCE, size - MIN_CLEARANCE, size=2)
            if any(float(np.hypot(*(p - q))) < MIN_CLEARANCE for q in placed):
                continue
            if any(math.dist(tuple(p), oc) < orad + MIN_CLEARANCE for oc, orad in obstacles):
                continue
            if any(
                _point_segment_distance(p, np.array(w1), np.array(w2)) < MIN_CLEARANCE
                for w1, w2 in walls
            ):
                continue
            placed.append(p)
            return tuple(float(x) for x in p)
        return None

    agents = []
    for i in range(n):
        p = _sample_point()
        if p is None:
            return None
        g = i % types
        agents.append(
            AgentSpec(
                id=i,
                start_position=p,
                agent_type=g,
                sensing_radius=sensing_radius,
                max_speed=max_speed,
                preference_row=tuple(float(x) for x in preference_table[:, g]),
            )
        )

    tasks = []
    for j in range(n):
        p = _sample_point()
        if p is None:
            return None
        tasks.append(
            TaskSpec(
                id=j,
                position=p,
                task_type=j % types,
                workload=float(rng.uniform(*workload_range)),
                weight=float(rng.uniform(*weight_range)),
            )
        )

    try:
        return Scenario(
            workspace_size=size,
            walls=tuple(walls),
            obstacles=tuple(obstacles),
            agents=tuple(agents),
            tasks=tuple(tasks),
            seed=seed,
            dt=dt,
            alpha=alpha,
        )
    except ScenarioError:
        return None


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-30:
        return float(np.hypot(*(p - a)))
    t = float(np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * ab))))
