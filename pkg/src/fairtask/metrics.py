"""Evaluation quantities: utility ratios, fairness indices, optimum, regret.

rho_j (realized utility over importance weight) is the unit of fairness
accounting; F(rho) is the reciprocal coefficient of variation and Jain's
index is (sum rho)^2 / (m * sum rho^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fairtask import assign, world

# Returned by fairness_cv for exactly-equal ratios so CSV output stays finite.
CV_SENTINEL = 1e9


@dataclass(eq=False)
class EpisodeResult:
    """Executed-trajectory summary produced by the episode runners."""

    realized_utilities: np.ndarray      # (m,)
    weights: np.ndarray                 # (m,)
    completion_time: float
    total_distance: float
    per_agent_distance: np.ndarray      # (N,)
    collision_count: int
    discovery_times: np.ndarray         # (m,)
    assignment_log: tuple[tuple[float, int, int], ...]  # (time, agent, task)
    incomplete: bool
    rule: str
    k: int | None = None
    u_star: float = math.nan
    u_pi: float = math.nan
    seed: int = 0
    episode: int = 0
    online_triggers: tuple = ()

    @property
    def regret_gap(self) -> float:
        return self.u_star - self.u_pi


def rho(result: EpisodeResult) -> np.ndarray:
    """Normalized utility-to-weight ratio per task."""
    if np.any(result.weights <= 0):
        raise ValueError("weights must be positive")
    return result.realized_utilities / result.weights


def fairness_cv(values) -> float:
    """Reciprocal coefficient of variation (population sigma); higher is fairer.

    Exactly equal inputs have sigma 0; the finite CV_SENTINEL is returned in
    place of infinity so downstream tabulation stays finite (check with
    is_exact_equality).
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("fairness_cv needs at least two ratios")
    sigma = float(values.std())
    if sigma == 0.0:
        return CV_SENTINEL
    return float(values.mean()) / sigma


def is_exact_equality(fairness_value: float) -> bool:
    """True when fairness_cv hit the zero-variance sentinel."""
    return fairness_value == CV_SENTINEL


def jain(values) -> float:
    """Jain's fairness index, in [1/m, 1]; 1 at perfect equality."""
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("jain needs at least one ratio")
    sq = float(np.sum(values * values))
    if sq == 0.0:
        raise ValueError("jain undefined for all-zero ratios")
    total = float(np.sum(values))
    return total * total / (values.size * sq)


def centralized_optimum(sc: world.Scenario, provider) -> tuple[float, assign.Assignment]:
    """Full-information optimum of the weighted-log objective.

    Utilities come from shortest-path distances at initial positions with
    the scenario's alpha; the provider supplies pairwise(task_pos, agent_pos).
    """
    d = provider.pairwise(sc.task_positions(), sc.agent_positions())
    u = assign.compute_utility(d, world.preference_matrix(sc), sc.alpha)
    solution = assign.solve_eg(u, world.task_weights(sc))
    return solution.objective, solution


def realized_value(result: EpisodeResult) -> float:
    """Weighted-log value of the realized utilities; -inf on unserved tasks."""
    return assign.weighted_log_value(result.realized_utilities, result.weights)


def regret(u_star: float, realized_values) -> float:
    """Mean gap between an optimum and a sample of realized values."""
    realized_values = np.asarray(realized_values, dtype=float)
    if realized_values.size == 0:
        raise ValueError("regret needs a non-empty sample")
    return float(np.mean(u_star - realized_values))
