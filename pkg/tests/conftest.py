from __future__ import annotations

import pytest

from ctcsim.catalog import CompositeTaskSpec, SubtaskSpec
from ctcsim.config import DEFENSE, PURSUIT, default_unit_table


def roster(marine=0, marauder=0, medivac=0):
    return tuple(["marine"] * marine + ["marauder"] * marauder + ["medivac"] * medivac)


def make_spec(
    subtask_rosters,
    kinds=None,
    name="custom",
    distances=(16.0, 16.0),
    episode_limit=150,
    map_bounds=(32.0, 32.0),
    interference=None,
    agent_spawn="near_base",
    allies=None,
):
    """Small builder for ad-hoc specs: rosters as dicts of archetype counts."""
    kinds = kinds or [DEFENSE] * len(subtask_rosters)
    subtasks = []
    for i, counts in enumerate(subtask_rosters):
        r = roster(**counts)
        ally = roster(**allies[i]) if allies is not None else r
        subtasks.append(SubtaskSpec(kind=kinds[i], enemies=r, allies=ally))
    if map_bounds == (32.0, 32.0) and len(subtasks) > 2:
        map_bounds = (16.0 * (len(subtasks) - 1) + 16.0, 32.0)
    return CompositeTaskSpec(
        name=name,
        subtasks=tuple(subtasks),
        distances=distances,
        episode_limit=episode_limit,
        map_bounds=map_bounds,
        interference=interference,
        agent_spawn=agent_spawn,
    )


@pytest.fixture(scope="session")
def table():
    return default_unit_table()


@pytest.fixture(scope="session")
def marine(table):
    return table.by_name("marine")


@pytest.fixture(scope="session")
def marauder(table):
    return table.by_name("marauder")


@pytest.fixture(scope="session")
def medivac(table):
    return table.by_name("medivac")
