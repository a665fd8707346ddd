"""Declarative task specs, the built-in catalog, and layout generation.

Geometry model: subtasks are parallel "lanes" along the x axis, centered on
the map. Each lane holds an enemy spawn cluster (the region center) on a
north line, the contested/target base due south of it, and the assigned
agents' spawn cluster between them. Adjacent region centers sit exactly L1
apart (and agent clusters L2 apart; lanes are parallel so L1 = L2 for every
shipped task, matching the interference table). Units are jittered uniformly
within a disk around their cluster center by the seeded RNG, so identical
(spec, seed) pairs always produce identical layouts.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import (
    ALLY,
    ARCHETYPE_NAMES,
    DEFENSE,
    ENEMY,
    KIND_NAMES,
    PURSUIT,
    ArchetypeTable,
    EngineConfig,
)

CATALOG_ENV_VAR = "CTC_CATALOG"
CATALOG_VERSION = 1

# Lane geometry constants (map height 32 assumed; see validate_spec).
LANE_MARGIN = 4.0
ENEMY_LINE_OFFSET = 10.0  # enemy cluster y = height - 10
BASE_Y = 7.0
AGENT_NEAR_BASE_Y = 9.0
AGENT_NEAR_ENEMY_GAP = 4.0  # near_enemies agent line y = enemy line - gap
MIN_MAP_HEIGHT = 32.0

# Two sight-radii of drift margin beyond sight range: separations above this
# leave subtasks informationally independent; the D3 interference distance
# (14) sits exactly on this boundary.
INDEPENDENCE_DISTANCE = 14.0

INTERFERENCE_DISTANCES = {"D1": 7.0, "D2": 10.0, "D3": 14.0}

AGENT_SPAWN_MODES = ("near_base", "near_enemies")


class TaskNotFoundError(KeyError):
    """Unknown task name; the message lists the valid names."""


class SpecFormatError(ValueError):
    """Malformed task document."""


class LayoutError(ValueError):
    """Spec geometry cannot be realized within its map bounds."""


@dataclass(frozen=True)
class SubtaskSpec:
    """One atomic subtask: an enemy group contesting/fleeing to a base."""

    kind: int  # DEFENSE | PURSUIT
    enemies: tuple[str, ...]  # expanded archetype names, canonical order
    allies: tuple[str, ...] | None = None  # spawn assignment; mirrors enemies when None


@dataclass(frozen=True)
class CompositeTaskSpec:
    name: str
    subtasks: tuple[SubtaskSpec, ...]
    distances: tuple[float, float]  # (L1, L2) inter-region distances
    episode_limit: int
    map_bounds: tuple[float, float] = (32.0, 32.0)
    interference: str | None = None  # D1 | D2 | D3 for interference variants
    agent_spawn: str = "near_base"

    @property
    def n_subtasks(self) -> int:
        return len(self.subtasks)

    def total_enemies(self) -> Counter:
        c: Counter = Counter()
        for s in self.subtasks:
            c.update(s.enemies)
        return c

    def total_allies(self) -> Counter:
        c: Counter = Counter()
        for roster in resolve_ally_assignment(self):
            c.update(roster)
        return c

    @property
    def n_agents(self) -> int:
        return sum(self.total_allies().values())

    @property
    def n_enemies(self) -> int:
        return sum(self.total_enemies().values())


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class UnitSpawn:
    archetype: str
    allegiance: int
    subtask_index: int
    x: float
    y: float


@dataclass(frozen=True)
class Layout:
    region_centers: tuple[tuple[float, float], ...]
    bases: tuple[tuple[float, float], ...]
    agent_centers: tuple[tuple[float, float], ...]
    spawns: tuple[UnitSpawn, ...]  # allies first, then enemies; index = unit_id


def resolve_ally_assignment(spec: CompositeTaskSpec) -> tuple[tuple[str, ...], ...]:
    """Per-subtask ally rosters: as declared, else mirroring the enemies."""
    rosters = []
    for s in spec.subtasks:
        rosters.append(s.allies if s.allies is not None else s.enemies)
    return tuple(rosters)


# ---------------------------------------------------------------------------
# Document (file) format


def _expand_roster(doc: dict) -> tuple[str, ...]:
    if not isinstance(doc, dict):
        raise SpecFormatError(f"roster must be a mapping of archetype -> count, got {doc!r}")
    out = []
    for name in ARCHETYPE_NAMES:
        count = doc.get(name, 0)
        if not isinstance(count, int) or count < 0:
            raise SpecFormatError(f"bad count for {name}: {count!r}")
        out.extend([name] * count)
    unknown = set(doc) - set(ARCHETYPE_NAMES)
    if unknown:
        raise SpecFormatError(f"unknown archetypes in roster: {sorted(unknown)}")
    return tuple(out)


def _roster_doc(roster: tuple[str, ...]) -> dict:
    c = Counter(roster)
    return {name: c[name] for name in ARCHETYPE_NAMES if c[name] > 0}


def task_from_document(doc: dict) -> CompositeTaskSpec:
    try:
        name = doc["name"]
        subtask_docs = doc["subtasks"]
        distances = doc["distances"]
        episode_limit = doc["episode_limit"]
    except (KeyError, TypeError) as e:
        raise SpecFormatError(f"task document missing field: {e}") from e
    subtasks = []
    for sd in subtask_docs:
        kind = sd.get("kind")
        if kind not in KIND_NAMES:
            raise SpecFormatError(f"{name}: bad subtask kind {kind!r}")
        allies = sd.get("allies")
        subtasks.append(
            SubtaskSpec(
                kind=KIND_NAMES.index(kind),
                enemies=_expand_roster(sd["enemies"]),
                allies=_expand_roster(allies) if allies is not None else None,
            )
        )
    bounds = doc.get("map_bounds", [32.0, 32.0])
    interference = doc.get("interference")
    if interference is not None and interference not in INTERFERENCE_DISTANCES:
        raise SpecFormatError(f"{name}: bad interference class {interference!r}")
    agent_spawn = doc.get("agent_spawn", "near_base")
    if agent_spawn not in AGENT_SPAWN_MODES:
        raise SpecFormatError(f"{name}: bad agent_spawn {agent_spawn!r}")
    return CompositeTaskSpec(
        name=str(name),
        subtasks=tuple(subtasks),
        distances=(float(distances[0]), float(distances[1])),
        episode_limit=int(episode_limit),
        map_bounds=(float(bounds[0]), float(bounds[1])),
        interference=interference,
        agent_spawn=agent_spawn,
    )


def task_to_document(spec: CompositeTaskSpec) -> dict:
    doc = {
        "name": spec.name,
        "episode_limit": spec.episode_limit,
        "distances": [spec.distances[0], spec.distances[1]],
        "map_bounds": [spec.map_bounds[0], spec.map_bounds[1]],
        "interference": spec.interference,
        "agent_spawn": spec.agent_spawn,
        "subtasks": [],
    }
    for s in spec.subtasks:
        sd = {"kind": KIND_NAMES[s.kind], "enemies": _roster_doc(s.enemies)}
        if s.allies is not None:
            sd["allies"] = _roster_doc(s.allies)
        doc["subtasks"].append(sd)
    return doc


def emit_catalog(specs: list[CompositeTaskSpec]) -> str:
    doc = {"version": CATALOG_VERSION, "tasks": [task_to_document(s) for s in specs]}
    return yaml.safe_dump(doc, sort_keys=False)


def parse_catalog(text: str) -> dict[str, CompositeTaskSpec]:
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise SpecFormatError("catalog must be a mapping with a 'tasks' list")
    out: dict[str, CompositeTaskSpec] = {}
    for td in doc["tasks"]:
        spec = task_from_document(td)
        if spec.name in out:
            raise SpecFormatError(f"duplicate task name {spec.name}")
        out[spec.name] = spec
    return out


def load_task_file(path: str | Path) -> CompositeTaskSpec:
    """Load a single-task spec file (one task document)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    return task_from_document(doc)


def _builtin_catalog_path() -> Path:
    return Path(str(resources.files("ctcsim").joinpath("data/tasks.yaml")))


_CATALOG_CACHE: dict[str, dict[str, CompositeTaskSpec]] = {}


def load_catalog(path: str | Path | None = None) -> dict[str, CompositeTaskSpec]:
    """The task catalog, from `path`, $CTC_CATALOG, or the shipped file."""
    if path is None:
        path = os.environ.get(CATALOG_ENV_VAR) or _builtin_catalog_path()
    key = str(path)
    if key not in _CATALOG_CACHE:
        with open(path, "r", encoding="utf-8") as f:
            _CATALOG_CACHE[key] = parse_catalog(f.read())
    return _CATALOG_CACHE[key]


def lookup_task(name: str, path: str | Path | None = None) -> CompositeTaskSpec:
    catalog = load_catalog(path)
    if name not in catalog:
        raise TaskNotFoundError(
            f"unknown task {name!r}; valid names: {', '.join(sorted(catalog))}"
        )
    return catalog[name]


# ---------------------------------------------------------------------------
# Classification and validation


def classify_variant(spec: CompositeTaskSpec) -> str:
    """He/Ho × A/S: homogeneous iff allies are one archetype; symmetrical iff
    all subtask enemy rosters are equal as multisets."""
    ally_kinds = set(spec.total_allies())
    homogeneous = len(ally_kinds) == 1
    rosters = [Counter(s.enemies) for s in spec.subtasks]
    symmetric = all(r == rosters[0] for r in rosters[1:])
    return ("Ho" if homogeneous else "He") + ("S" if symmetric else "A")


def _lane_positions(spec: CompositeTaskSpec) -> list[float]:
    l1, l2 = spec.distances
    seps = [l1 if i % 2 == 0 else l2 for i in range(spec.n_subtasks - 1)]
    width = sum(seps)
    w = spec.map_bounds[0]
    x0 = (w - width) / 2.0
    if x0 < LANE_MARGIN or x0 + width > w - LANE_MARGIN:
        raise LayoutError(
            f"{spec.name}: {spec.n_subtasks} lanes spanning {width} do not fit "
            f"map width {w} with margin {LANE_MARGIN}"
        )
    xs = [x0]
    for sep in seps:
        xs.append(xs[-1] + sep)
    return xs


def validate_spec(spec: CompositeTaskSpec, table: ArchetypeTable | None = None) -> list[Violation]:
    """Spec-level checks; an empty list means valid."""
    violations: list[Violation] = []
    if spec.n_subtasks < 2:
        violations.append(
            Violation("subtask_count", f"composite tasks need >= 2 subtasks, got {spec.n_subtasks}")
        )
    for i, s in enumerate(spec.subtasks):
        if not s.enemies:
            violations.append(Violation("empty_roster", f"subtask {i} has no enemies"))
    if spec.total_allies() != spec.total_enemies():
        violations.append(
            Violation(
                "roster_asymmetry",
                f"ally roster {dict(spec.total_allies())} != enemy roster "
                f"{dict(spec.total_enemies())}",
            )
        )
    l1, l2 = spec.distances
    if spec.interference is not None:
        expected = INTERFERENCE_DISTANCES[spec.interference]
        if l1 != expected or l2 != expected:
            violations.append(
                Violation(
                    "interference_distance",
                    f"{spec.interference} fixes L1 = L2 = {expected}, got ({l1}, {l2})",
                )
            )
        for i, s in enumerate(spec.subtasks):
            kinds = Counter(s.enemies)
            healers = kinds.get("medivac", 0)
            if healers == 0 or healers == sum(kinds.values()):
                violations.append(
                    Violation(
                        "interference_augmentation",
                        f"subtask {i} of an interference task needs a Medivac plus "
                        "escort units",
                    )
                )
    elif spec.n_subtasks > 1 and min(l1, l2) <= INDEPENDENCE_DISTANCE:
        violations.append(
            Violation(
                "spacing",
                f"non-interference separation {min(l1, l2)} must exceed the "
                f"informational independence distance {INDEPENDENCE_DISTANCE}",
            )
        )
    if spec.map_bounds[1] < MIN_MAP_HEIGHT:
        violations.append(
            Violation("map_height", f"map height must be >= {MIN_MAP_HEIGHT}")
        )
    else:
        try:
            _lane_positions(spec)
        except LayoutError as e:
            violations.append(Violation("map_width", str(e)))
    return violations


# Violation codes tolerated by env reset (single-subtask custom specs are
# runnable even though the catalog invariant demands N >= 2).
RESET_TOLERATED_VIOLATIONS = frozenset({"subtask_count"})


# ---------------------------------------------------------------------------
# Layout generation


def generate_layout(
    spec: CompositeTaskSpec,
    seed: int,
    cfg: EngineConfig | None = None,
) -> Layout:
    """Concrete spawn positions for all units and bases.

    Deterministic in (spec, seed): the jitter stream is a seeded PCG64
    generator consumed in unit_id order (allies per subtask, then enemies).
    """
    cfg = cfg or EngineConfig()
    if spec.map_bounds[1] < MIN_MAP_HEIGHT:
        raise LayoutError(
            f"{spec.name}: map height {spec.map_bounds[1]} below minimum {MIN_MAP_HEIGHT}"
        )
    xs = _lane_positions(spec)
    h = spec.map_bounds[1]
    enemy_y = h - ENEMY_LINE_OFFSET
    agent_y = (
        AGENT_NEAR_BASE_Y
        if spec.agent_spawn == "near_base"
        else enemy_y - AGENT_NEAR_ENEMY_GAP
    )
    region_centers = tuple((x, enemy_y) for x in xs)
    bases = tuple((x, BASE_Y) for x in xs)
    agent_centers = tuple((x, agent_y) for x in xs)

    rng = np.random.default_rng(seed)

    order: list[tuple[str, int, int]] = []
    for s_idx, roster in enumerate(resolve_ally_assignment(spec)):
        order.extend((arch, ALLY, s_idx) for arch in roster)
    for s_idx, sub in enumerate(spec.subtasks):
        order.extend((arch, ENEMY, s_idx) for arch in sub.enemies)

    # Uniform-in-disk jitter; one (r, theta) uniform pair per unit in
    # unit_id order (bulk draw matches the scalar stream bit-for-bit).
    draws = rng.random((len(order), 2))
    radius = cfg.jitter_radius * np.sqrt(draws[:, 0])
    theta = 2.0 * math.pi * draws[:, 1]
    dx = radius * np.cos(theta)
    dy = radius * np.sin(theta)

    spawns: list[UnitSpawn] = []
    for i, (arch, side, s_idx) in enumerate(order):
        cx, cy = agent_centers[s_idx] if side == ALLY else region_centers[s_idx]
        spawns.append(UnitSpawn(arch, side, s_idx, cx + dx[i], cy + dy[i]))
    return Layout(
        region_centers=region_centers,
        bases=bases,
        agent_centers=agent_centers,
        spawns=tuple(spawns),
    )
