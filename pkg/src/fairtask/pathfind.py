"""Occupancy-grid discretization and obstacle-aware shortest paths.

The navigation grid covers the whole workspace at a fixed resolution; cells
whose centers come within clearance (resolution/2) of a wall, or inside an
obstacle inflated by the same clearance, are blocked.  Distances are
8-connected A* path lengths with octile edge costs (res, res*sqrt(2)), so
they slightly overestimate Euclidean lengths -- uniformly for every caller.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

from fairtask import world

DEFAULT_RESOLUTION = 0.05
_SQRT2 = math.sqrt(2.0)

# 8-neighborhood: (dx, dy, diagonal?)
_NEIGHBORS = (
    (1, 0, False), (-1, 0, False), (0, 1, False), (0, -1, False),
    (1, 1, True), (1, -1, True), (-1, 1, True), (-1, -1, True),
)


class GridPlacementError(ValueError):
    """An agent start or task position fell inside a blocked cell."""


@dataclass
class NavGrid:
    resolution: float
    origin: tuple[float, float]
    dims: tuple[int, int]            # (nx, ny) cells
    blocked: np.ndarray              # bool, shape (nx, ny)
    walls: np.ndarray = None         # (W, 2, 2) interior wall segments
    obstacles: np.ndarray = None     # (K, 3) disc rows: cx, cy, radius

    def cell_of(self, point) -> tuple[int, int]:
        nx, ny = self.dims
        ix = int((point[0] - self.origin[0]) / self.resolution)
        iy = int((point[1] - self.origin[1]) / self.resolution)
        return min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1)

    def center(self, cell: tuple[int, int]) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + (cell[0] + 0.5) * self.resolution,
                self.origin[1] + (cell[1] + 0.5) * self.resolution,
            ]
        )

    def is_free(self, point) -> bool:
        ix, iy = self.cell_of(point)
        return not bool(self.blocked[ix, iy])

    def flat_index(self, cell: tuple[int, int]) -> int:
        return cell[0] * self.dims[1] + cell[1]


def build_nav_grid(sc: world.Scenario, resolution: float = DEFAULT_RESOLUTION) -> NavGrid:
    """Discretize scenario geometry; fails if any entity sits in a blocked cell."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    min_sense = min(a.sensing_radius for a in sc.agents)
    if resolution > min_sense:
        raise ValueError(
            f"resolution {resolution} exceeds the smallest sensing radius {min_sense}"
        )
    size = sc.workspace_size
    n_cells = int(math.ceil(size / resolution))
    xs = (np.arange(n_cells) + 0.5) * resolution
    cx, cy = np.meshgrid(xs, xs, indexing="ij")
    blocked = np.zeros((n_cells, n_cells), dtype=bool)
    clearance = resolution / 2.0

    for (ox, oy), r in sc.obstacles:
        blocked |= (cx - ox) ** 2 + (cy - oy) ** 2 <= (r + clearance) ** 2

    for (x1, y1), (x2, y2) in sc.walls:
        blocked |= _segment_distance_field(cx, cy, x1, y1, x2, y2) <= clearance

    walls = (
        np.array([[list(a), list(b)] for a, b in sc.walls], dtype=float)
        if sc.walls
        else np.zeros((0, 2, 2))
    )
    discs = (
        np.array([[c[0], c[1], r] for c, r in sc.obstacles], dtype=float)
        if sc.obstacles
        else np.zeros((0, 3))
    )
    grid = NavGrid(
        resolution=resolution, origin=(0.0, 0.0), dims=(n_cells, n_cells),
        blocked=blocked, walls=walls, obstacles=discs,
    )
    for a in sc.agents:
        if not grid.is_free(a.start_position):
            raise GridPlacementError(f"agent {a.id} start is in a blocked cell")
    for t in sc.tasks:
        if not grid.is_free(t.position):
            raise GridPlacementError(f"task {t.id} position is in a blocked cell")
    return grid


def _segment_distance_field(cx, cy, x1, y1, x2, y2):
    vx, vy = x2 - x1, y2 - y1
    denom = vx * vx + vy * vy
    if denom < 1e-30:
        return np.hypot(cx - x1, cy - y1)
    t = np.clip(((cx - x1) * vx + (cy - y1) * vy) / denom, 0.0, 1.0)
    return np.hypot(cx - (x1 + t * vx), cy - (y1 + t * vy))


def _diagonal_ok(blocked, a: tuple[int, int], b: tuple[int, int]) -> bool:
    # Forbid corner cutting: both orthogonal companions of a diagonal move
    # must be free, otherwise a zero-width wall could be crossed.
    return not blocked[a[0], b[1]] and not blocked[b[0], a[1]]


def shortest_path_distance(grid: NavGrid, a, b) -> float:
    """Octile A* distance between the snapped endpoint cells.

    Returns math.inf when the endpoints are disconnected.  Path lengths are
    rebuilt from (straight, diagonal) step counts, so any two optimal paths
    produce bit-identical values.
    """
    counts = _astar_counts(grid, a, b)
    if counts is None:
        return math.inf
    straight, diag = counts
    return straight * grid.resolution + diag * (grid.resolution * _SQRT2)


def _astar_counts(grid: NavGrid, a, b) -> tuple[int, int] | None:
    start = grid.cell_of(a)
    goal = grid.cell_of(b)
    if grid.blocked[start] or grid.blocked[goal]:
        raise ValueError("shortest path endpoints must lie in free cells")
    if start == goal:
        return (0, 0)
    nx, ny = grid.dims
    res = grid.resolution
    blocked = grid.blocked

    def h(cell):
        dx = abs(cell[0] - goal[0])
        dy = abs(cell[1] - goal[1])
        return res * (max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy))

    g_best: dict[tuple[int, int], float] = {start: 0.0}
    counts: dict[tuple[int, int], tuple[int, int]] = {start: (0, 0)}
    # Tie-break: lower f, then lower heuristic, then lower flat cell index.
    frontier = [(h(start), h(start), grid.flat_index(start), start)]
    closed: set[tuple[int, int]] = set()

    while frontier:
        f, _, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            return counts[cell]
        closed.add(cell)
        cg = g_best[cell]
        cs, cd = counts[cell]
        for dx, dy, diag in _NEIGHBORS:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny):
                continue
            if blocked[nxt] or (diag and not _diagonal_ok(blocked, cell, nxt)):
                continue
            ng = cg + (res * _SQRT2 if diag else res)
            if ng < g_best.get(nxt, math.inf):
                g_best[nxt] = ng
                counts[nxt] = (cs, cd + 1) if diag else (cs + 1, cd)
                hh = h(nxt)
                heapq.heappush(frontier, (ng + hh, hh, grid.flat_index(nxt), nxt))
    return None


def _astar_cells(grid: NavGrid, a, b) -> list[tuple[int, int]] | None:
    """A* with parent tracking, for waypoint extraction."""
    start = grid.cell_of(a)
    goal = grid.cell_of(b)
    if grid.blocked[start] or grid.blocked[goal]:
        raise ValueError("path endpoints must lie in free cells")
    if start == goal:
        return [start]
    nx, ny = grid.dims
    res = grid.resolution
    blocked = grid.blocked

    def h(cell):
        dx = abs(cell[0] - goal[0])
        dy = abs(cell[1] - goal[1])
        return res * (max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy))

    g_best = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    frontier = [(h(start), h(start), grid.flat_index(start), start)]
    closed: set[tuple[int, int]] = set()
    while frontier:
        _, _, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while path[-1] != start:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(cell)
        cg = g_best[cell]
        for dx, dy, diag in _NEIGHBORS:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny):
                continue
            if blocked[nxt] or (diag and not _diagonal_ok(blocked, cell, nxt)):
                continue
            ng = cg + (res * _SQRT2 if diag else res)
            if ng < g_best.get(nxt, math.inf):
                g_best[nxt] = ng
                parent[nxt] = cell
                hh = h(nxt)
                heapq.heappush(frontier, (ng + hh, hh, grid.flat_index(nxt), nxt))
    return None


def _segment_crosses_wall(grid: NavGrid, p, q) -> bool:
    """True when the open segment p-q crosses an interior wall segment."""
    if grid.walls is None or len(grid.walls) == 0:
        return False
    px, py = float(p[0]), float(p[1])
    qx, qy = float(q[0]), float(q[1])
    for (x1, y1), (x2, y2) in grid.walls:
        wx, wy = x2 - x1, y2 - y1
        side_p = wx * (py - y1) - wy * (px - x1)
        side_q = wx * (qy - y1) - wy * (qx - x1)
        if side_p * side_q >= 0.0:
            continue
        rx, ry = qx - px, qy - py
        denom = rx * wy - ry * wx
        if abs(denom) < 1e-18:
            continue
        u = ((x1 - px) * ry - (y1 - py) * rx) / denom
        if -1e-12 <= u <= 1.0 + 1e-12:
            return True
    return False


def nearest_free_cell(grid: NavGrid, point) -> tuple[int, int] | None:
    """Snapped cell, or the closest reachable free cell near it.

    Motion clipping can press an agent against a wall whose cell is blocked
    by clearance inflation.  Queries from such positions snap to the nearest
    free cell on the *same side* of the geometry: candidates whose connecting
    segment would cross a wall are rejected.  Deterministic tie-break by
    distance, then flat index.
    """
    cell = grid.cell_of(point)
    if not grid.blocked[cell]:
        return cell
    nx, ny = grid.dims
    for ring in range(1, 5):
        candidates = []
        for dx in range(-ring, ring + 1):
            for dy in range(-ring, ring + 1):
                if max(abs(dx), abs(dy)) != ring:
                    continue
                c = (cell[0] + dx, cell[1] + dy)
                if not (0 <= c[0] < nx and 0 <= c[1] < ny) or grid.blocked[c]:
                    continue
                center = grid.center(c)
                if _segment_crosses_wall(grid, point, center):
                    continue
                gap = float(np.hypot(*(center - np.asarray(point, dtype=float))))
                candidates.append((gap, grid.flat_index(c), c))
        if candidates:
            return min(candidates)[2]
    return None


def _segment_hits_disc(p, q, cx, cy, r) -> bool:
    px, py = float(p[0]), float(p[1])
    vx, vy = float(q[0]) - px, float(q[1]) - py
    denom = vx * vx + vy * vy
    if denom < 1e-30:
        return math.hypot(px - cx, py - cy) < r
    t = max(0.0, min(1.0, ((cx - px) * vx + (cy - py) * vy) / denom))
    return math.hypot(px + t * vx - cx, py + t * vy - cy) < r


def line_of_sight(grid: NavGrid, a, b) -> bool:
    """True when the straight segment a-b is traversable.

    Combines a conservative free-cell sampling pass (keeps legs clear of the
    inflated blocked band) with exact segment tests against walls and discs;
    sampling alone can miss a diagonal wall slipping between cell centers.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        return grid.is_free(a)
    if _segment_crosses_wall(grid, a, b):
        return False
    if grid.obstacles is not None:
        for cx, cy, r in grid.obstacles:
            if _segment_hits_disc(a, b, cx, cy, r):
                return False
    steps = max(int(math.ceil(length / (grid.resolution / 4.0))), 1)
    for k in range(steps + 1):
        if not grid.is_free(a + (b - a) * (k / steps)):
            return False
    return True


def path_waypoints(grid: NavGrid, a, b) -> list[np.ndarray]:
    """String-pulled waypoint chain from a to b (a excluded, b last).

    Consecutive waypoints are mutually visible.  Returns [] when a == b or
    when no path exists.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if float(np.hypot(*(b - a))) == 0.0:
        return []
    ca = nearest_free_cell(grid, a)
    cb = nearest_free_cell(grid, b)
    if ca is None or cb is None:
        return []
    cells = _astar_cells(grid, grid.center(ca), grid.center(cb))
    if cells is None:
        return []
    # Keep the snapped entry/exit centers when they differ from the endpoint
    # cells: a wall-pressed start must first step to its own-side free cell.
    centers = [grid.center(c) for c in cells]
    if cells[0] == grid.cell_of(a):
        centers = centers[1:]
    if cells and cells[-1] == grid.cell_of(b) and centers:
        centers = centers[:-1]
    pts = [a] + centers + [b]
    out: list[np.ndarray] = []
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not line_of_sight(grid, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return out


class DistanceProvider:
    """Batch shortest-path distances via cached per-source Dijkstra fields.

    Sources are snapped to cells; one field per distinct source cell is
    computed on the grid graph (same 8-connected topology and octile costs
    as the A* routines) and reused for every query against it.
    """

    def __init__(self, grid: NavGrid):
        self.grid = grid
        self._graph: csr_matrix | None = None
        self._fields: dict[int, np.ndarray] = {}

    def _build_graph(self) -> csr_matrix:
        if self._graph is not None:
            return self._graph
        nx, ny = self.grid.dims
        res = self.grid.resolution
        blocked = self.grid.blocked
        rows, cols, data = [], [], []
        for dx, dy, diag in _NEIGHBORS:
            sl_x = slice(max(0, -dx), nx - max(0, dx))
            sl_y = slice(max(0, -dy), ny - max(0, dy))
            src_x, src_y = np.meshgrid(
                np.arange(nx)[sl_x], np.arange(ny)[sl_y], indexing="ij"
            )
            dst_x, dst_y = src_x + dx, src_y + dy
            ok = ~blocked[src_x, src_y] & ~blocked[dst_x, dst_y]
            if diag:
                ok &= ~blocked[src_x, dst_y] & ~blocked[dst_x, src_y]
            rows.append((src_x[ok] * ny + src_y[ok]).ravel())
            cols.append((dst_x[ok] * ny + dst_y[ok]).ravel())
            data.append(np.full(int(ok.sum()), res * _SQRT2 if diag else res))
        n = nx * ny
        self._graph = csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return self._graph

    def _snap_index(self, point) -> int | None:
        cell = nearest_free_cell(self.grid, point)
        return None if cell is None else self.grid.flat_index(cell)

    def field(self, source) -> np.ndarray:
        idx = self._snap_index(source)
        if idx is None:
            return np.full(self.grid.dims[0] * self.grid.dims[1], math.inf)
        cached = self._fields.get(idx)
        if cached is None:
            cached = _sp_dijkstra(self._build_graph(), indices=idx, directed=True)
            self._fields[idx] = cached
        return cached

    def distance(self, a, b) -> float:
        idx = self._snap_index(b)
        if idx is None:
            return math.inf
        return float(self.field(a)[idx])

    def pairwise(self, sources, targets) -> np.ndarray:
        sources = np.atleast_2d(np.asarray(sources, dtype=float))
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        t_idx = [self._snap_index(t) for t in targets]
        out = np.empty((len(sources), len(targets)))
        for i, s in enumerate(sources):
            f = self.field(s)
            out[i] = [math.inf if t is None else f[t] for t in t_idx]
        return out
