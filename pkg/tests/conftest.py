"""Shared builders for hand-constructed scenarios."""

from __future__ import annotations

import numpy as np
import pytest

from fairtask import world


def make_scenario(
    agent_positions,
    task_positions,
    *,
    size=2.5,
    walls=(),
    obstacles=(),
    dt=0.1,
    alpha=0.97,
    seed=0,
    sensing_radius=0.5,
    max_speed=1.0,
    preference_rows=None,
    workloads=None,
    weights=None,
    task_types=None,
    agent_types=None,
):
    """Scenario with explicit geometry; single task type unless overridden."""
    n = len(agent_positions)
    if preference_rows is None:
        preference_rows = [(1.0,)] * n
    if workloads is None:
        workloads = [1.0] * len(task_positions)
    if weights is None:
        weights = [1.0] * len(task_positions)
    if task_types is None:
        task_types = [0] * len(task_positions)
    if agent_types is None:
        agent_types = [0] * n
    agents = tuple(
        world.AgentSpec(
            id=i,
            start_position=tuple(map(float, agent_positions[i])),
            agent_type=agent_types[i],
            sensing_radius=sensing_radius,
            max_speed=max_speed,
            preference_row=tuple(preference_rows[i]),
        )
        for i in range(n)
    )
    tasks = tuple(
        world.TaskSpec(
            id=j,
            position=tuple(map(float, task_positions[j])),
            task_type=task_types[j],
            workload=float(workloads[j]),
            weight=float(weights[j]),
        )
        for j in range(len(task_positions))
    )
    return world.Scenario(
        workspace_size=size,
        walls=tuple(walls),
        obstacles=tuple(obstacles),
        agents=agents,
        tasks=tasks,
        seed=seed,
        dt=dt,
        alpha=alpha,
    )


@pytest.fixture
def empty_scenario():
    """One agent, one task, no geometry."""
    return make_scenario([(0.525, 0.525)], [(1.525, 0.525)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
