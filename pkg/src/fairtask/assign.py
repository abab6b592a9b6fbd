"""One-to-one assignment solvers and their brute-force oracles.

Conventions: matrices are task-major with shape (m, n) = (tasks, agents);
assignments map agents to tasks.  The weighted-log objective
sum_j w_j * log(u[j, pi(j)]) is concave in utilities but reduces to a linear
assignment over the score matrix s[j, i] = w_j * log(u[j, i] + eps) under
one-to-one constraints, because each task's inner sum selects exactly one
utility.  That reduction is what solve_eg exploits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

EPSILON = 1e-12  # log-score smoothing; far below any meaningful utility

RULE_EG = "eg"
RULE_HUNGARIAN = "hungarian"
RULE_MINMAX = "minmax"


@dataclass(eq=False)
class UtilityMatrix:
    """u[j, i] = alpha**d[j, i] * pref[j, i], with u = 0 at infinite distance."""

    values: np.ndarray
    alpha: float
    distances: np.ndarray
    preferences: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def rebuild_error(self) -> float:
        """Max deviation of stored values from the defining formula."""
        expected = _discounted(self.distances, self.preferences, self.alpha)
        return float(np.max(np.abs(self.values - expected))) if self.values.size else 0.0


@dataclass(eq=False)
class ScoreMatrix:
    scores: np.ndarray
    epsilon: float


@dataclass(eq=False)
class Assignment:
    task_of_agent: np.ndarray  # (n,) ints; a permutation when square
    objective: float
    rule: str

    @property
    def agent_of_task(self) -> np.ndarray:
        inv = np.empty_like(self.task_of_agent)
        inv[self.task_of_agent] = np.arange(len(self.task_of_agent))
        return inv

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, int(j)) for i, j in enumerate(self.task_of_agent)]


def _discounted(distances: np.ndarray, preferences: np.ndarray, alpha: float) -> np.ndarray:
    finite = np.isfinite(distances)
    out = np.zeros_like(preferences, dtype=float)
    out[finite] = np.power(alpha, distances[finite]) * preferences[finite]
    return out


def compute_utility(distances, preferences, alpha: float) -> UtilityMatrix:
    """Distance-discounted service utilities; infinite distance maps to 0."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    distances = np.asarray(distances, dtype=float)
    preferences = np.asarray(preferences, dtype=float)
    if distances.shape != preferences.shape:
        raise ValueError("distance and preference matrices must share a shape")
    if np.any(preferences < 0) or np.any(distances < 0):
        raise ValueError("distances and preferences must be non-negative")
    return UtilityMatrix(
        values=_discounted(distances, preferences, alpha),
        alpha=alpha,
        distances=distances.copy(),
        preferences=preferences.copy(),
    )


def eg_score_matrix(u: UtilityMatrix, weights) -> ScoreMatrix:
    """Linear scores s[j, i] = w_j * log(u[j, i] + eps) for the reduction."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    if weights.shape[0] != u.values.shape[0]:
        raise ValueError("one weight per task required")
    scores = weights[:, None] * np.log(u.values + EPSILON)
    return ScoreMatrix(scores=scores, epsilon=EPSILON)


def solve_hungarian_max(scores) -> Assignment:
    """Exact max-total-score one-to-one assignment (square inputs only)."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError(f"one-to-one assignment needs a square matrix, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    rows, cols = linear_sum_assignment(scores, maximize=True)
    task_of_agent = np.empty(scores.shape[1], dtype=int)
    task_of_agent[cols] = rows
    return Assignment(
        task_of_agent=task_of_agent,
        objective=float(scores[rows, cols].sum()),
        rule=RULE_HUNGARIAN,
    )


def solve_eg(u: UtilityMatrix, weights) -> Assignment:
    """Maximize sum_j w_j log(u[j, pi(j)]) via the linear score reduction.

    The reported objective is the exact weighted-log value of the chosen
    permutation (no epsilon); it is -inf when some selected utility is zero.
    """
    weights = np.asarray(weights, dtype=float)
    base = solve_hungarian_max(eg_score_matrix(u, weights).scores)
    asn = Assignment(task_of_agent=base.task_of_agent, objective=0.0, rule=RULE_EG)
    asn.objective = eg_objective(asn, u, weights)
    return asn


def eg_objective(assignment: Assignment, u: UtilityMatrix, weights) -> float:
    """Weighted-log value of an allocation; -inf flags a zero-utility task."""
    weights = np.asarray(weights, dtype=float)
    return weighted_log_value(task_utilities(assignment, u), weights)


def weighted_log_value(utilities_by_task, weights) -> float:
    """sum_j w_j log(u_j), accumulated in task order; -inf on any zero."""
    utilities_by_task = np.asarray(utilities_by_task, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(utilities_by_task <= 0.0):
        return -math.inf
    return float(np.sum(weights * np.log(utilities_by_task)))


def solve_minmax(costs) -> Assignment:
    """Bottleneck assignment: minimize the largest selected cost.

    Binary search over the sorted distinct cost values, testing perfect
    bipartite matchability at each threshold; among bottleneck-optimal
    permutations, ties resolve toward minimum total cost (a linear assignment
    restricted to feasible edges).
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.shape[0] != costs.shape[1]:
        raise ValueError(f"one-to-one assignment needs a square matrix, got {costs.shape}")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite and non-negative")
    n = costs.shape[0]
    values = np.unique(costs)
    lo, hi = 0, len(values) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(costs <= values[mid]):
            hi = mid
        else:
            lo = mid + 1
    bottleneck = float(values[lo])

    big = n * (float(costs.max()) + 1.0) + 1.0
    restricted = np.where(costs <= bottleneck, costs, big)
    rows, cols = linear_sum_assignment(restricted)
    task_of_agent = np.empty(n, dtype=int)
    task_of_agent[cols] = rows
    selected = costs[rows, cols]
    return Assignment(
        task_of_agent=task_of_agent,
        objective=float(selected.max()),
        rule=RULE_MINMAX,
    )


def _has_perfect_matching(adjacency: np.ndarray) -> bool:
    match = maximum_bipartite_matching(csr_matrix(adjacency), perm_type="column")
    return bool(np.all(match >= 0))


def task_utilities(assignment: Assignment, u: UtilityMatrix) -> np.ndarray:
    """Realized utility per task under a one-to-one allocation."""
    out = np.zeros(u.values.shape[0])
    for agent, task in assignment.pairs():
        out[task] = u.values[task, agent]
    return out


def pareto_dominates(a: Assignment, b: Assignment, u: UtilityMatrix) -> bool:
    """True when a serves every task at least as well as b, one strictly."""
    ua = task_utilities(a, u)
    ub = task_utilities(b, u)
    return bool(np.all(ua >= ub) and np.any(ua > ub))


# ---------------------------------------------------------------------------
# Exhaustive oracles (test references; independent of the solvers above)
# ---------------------------------------------------------------------------


def _permutations_as_assignments(n: int):
    for perm in itertools.permutations(range(n)):
        yield np.array(perm, dtype=int)


def brute_force_max_sum(scores) -> tuple[np.ndarray, float]:
    """Exhaustive max of sum_j scores[j, pi(j)]; returns (task_of_agent, value)."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    best_perm, best_val = None, -math.inf
    for task_of_agent in _permutations_as_assignments(n):
        val = float(scores[task_of_agent, np.arange(n)].sum())
        if val > best_val:
            best_perm, best_val = task_of_agent, val
    return best_perm, best_val


def brute_force_eg(u: UtilityMatrix, weights) -> tuple[np.ndarray, float]:
    """Exhaustive max of the weighted-log objective."""
    weights = np.asarray(weights, dtype=float)
    n = u.values.shape[0]
    best_perm, best_val = None, -math.inf
    for task_of_agent in _permutations_as_assignments(n):
        selected = u.values[task_of_agent, np.arange(n)]
        if np.any(selected <= 0.0):
            val = -math.inf
        else:
            val = float(np.sum(weights[task_of_agent] * np.log(selected)))
        if val > best_val:
            best_perm, best_val = task_of_agent, val
    return best_perm, best_val


def brute_force_minmax(costs) -> tuple[np.ndarray, float]:
    """Exhaustive min of the largest selected cost."""
    costs = np.asarray(costs, dtype=float)
    n = costs.shape[0]
    best_perm, best_val = None, math.inf
    for task_of_agent in _permutations_as_assignments(n):
        val = float(costs[task_of_agent, np.arange(n)].max())
        if val < best_val:
            best_perm, best_val = task_of_agent, val
    return best_perm, best_val
