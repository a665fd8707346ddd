"""Deterministic discrete-time combat core.

Time model: synchronous lockstep. Each step collects one command per living
unit (agent commands come from the caller, enemy commands from the scripted
controllers below), then resolves them in ascending unit_id order. Commands
are revalidated at resolution time, so a command whose target died or moved
out of range earlier in the same step fizzles into a stop with no state
change. Units never collide and may overlap.

Two steppers implement the same semantics: :class:`ReferenceSimulation`
(pure ops over UnitState values, the readable contract) and
:class:`FastSimulation` in :mod:`ctcsim.fastpath` (numba kernels over
struct-of-arrays state, the production path). A parity test pins them to
byte-identical episode streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .config import (
    ALLY,
    DEFENSE,
    ENEMY,
    MEDIVAC,
    PURSUIT,
    ArchetypeTable,
    EngineConfig,
    UnitArchetype,
)


class CommandRejected(ValueError):
    """An op precondition failed; the command has no effect."""


class Verb(IntEnum):
    STOP = 0
    MOVE = 1
    ATTACK = 2
    HEAL = 3


@dataclass(frozen=True)
class Command:
    verb: Verb
    actor_id: int
    target_id: int = -1
    # Displacement for MOVE, already scaled (|d| <= actor move_speed).
    dx: float = 0.0
    dy: float = 0.0


@dataclass
class UnitState:
    """One combat unit. alive <=> health > 0; dead units never act."""

    unit_id: int
    archetype: UnitArchetype
    allegiance: int  # ALLY | ENEMY
    subtask_index: int
    x: float
    y: float
    health: float
    cooldown_remaining: int = 0
    alive: bool = True
    was_attacked: bool = False

    def distance_to(self, other: "UnitState") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def distance_to_point(self, px: float, py: float) -> float:
        return math.hypot(px - self.x, py - self.y)


# ---------------------------------------------------------------------------
# Pure resolution ops


def resolve_attack(attacker: UnitState, target: UnitState) -> tuple[UnitState, UnitState]:
    """Apply one attack; returns updated (attacker, target).

    Damage is clamped at zero health; a killing blow flips alive and the
    target keeps its sticky was_attacked flag for the rest of the episode.
    """
    if not attacker.alive:
        raise CommandRejected("attacker dead")
    if not target.alive:
        raise CommandRejected("target dead")
    if attacker.allegiance == target.allegiance:
        raise CommandRejected("attack needs opposing allegiances")
    if attacker.archetype.attack_damage <= 0:
        raise CommandRejected(f"{attacker.archetype.name} cannot attack")
    if attacker.cooldown_remaining != 0:
        raise CommandRejected("attacker on cooldown")
    if attacker.distance_to(target) > attacker.archetype.attack_range:
        raise CommandRejected("target out of attack range")
    new_health = max(0.0, target.health - attacker.archetype.attack_damage)
    return (
        replace(attacker, cooldown_remaining=attacker.archetype.cooldown_steps),
        replace(target, health=new_health, alive=new_health > 0, was_attacked=True),
    )


def resolve_heal(healer: UnitState, target: UnitState) -> tuple[UnitState, UnitState]:
    """Apply one heal; healing a full-health target is a permitted no-op."""
    if not healer.alive:
        raise CommandRejected("healer dead")
    if not target.alive:
        raise CommandRejected("target dead")
    if healer.unit_id == target.unit_id:
        raise CommandRejected("cannot heal self")
    if healer.allegiance != target.allegiance:
        raise CommandRejected("heal needs same allegiance")
    if healer.archetype.heal_amount <= 0:
        raise CommandRejected(f"{healer.archetype.name} cannot heal")
    if healer.cooldown_remaining != 0:
        raise CommandRejected("healer on cooldown")
    if healer.distance_to(target) > healer.archetype.heal_range:
        raise CommandRejected("target out of heal range")
    new_health = min(target.archetype.max_health, target.health + healer.archetype.heal_amount)
    return (
        replace(healer, cooldown_remaining=healer.archetype.cooldown_steps),
        replace(target, health=new_health),
    )


def move_unit(
    unit: UnitState, direction: tuple[float, float], bounds: tuple[float, float]
) -> UnitState:
    """Displace by move_speed × direction, clamped to [0,w]×[0,h].

    direction is a unit vector (a zero vector is a no-op); non-unit vectors
    are normalized defensively.
    """
    if not unit.alive:
        raise CommandRejected("dead units cannot move")
    dx, dy = direction
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return unit
    step = unit.archetype.move_speed / norm
    w, h = bounds
    return replace(
        unit,
        x=min(max(unit.x + dx * step, 0.0), w),
        y=min(max(unit.y + dy * step, 0.0), h),
    )


def _apply_displacement(unit: UnitState, dx: float, dy: float, bounds: tuple[float, float]) -> UnitState:
    w, h = bounds
    return replace(
        unit,
        x=min(max(unit.x + dx, 0.0), w),
        y=min(max(unit.y + dy, 0.0), h),
    )


def _toward(x: float, y: float, tx: float, ty: float, speed: float) -> tuple[float, float]:
    """Displacement toward (tx, ty) capped at speed — never overshoots."""
    dx, dy = tx - x, ty - y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0, 0.0
    if dist <= speed:
        return dx, dy
    scale = speed / dist
    return dx * scale, dy * scale


# ---------------------------------------------------------------------------
# Scripted enemy controllers


def _nearest(unit: UnitState, candidates: list[UnitState], max_range: float) -> UnitState | None:
    """Nearest candidate within max_range; ties by lowest unit_id.

    Candidates must be sorted by unit_id (strict < keeps the earlier one).
    """
    best = None
    best_d = math.inf
    for c in candidates:
        d = unit.distance_to(c)
        if d <= max_range and d < best_d:
            best, best_d = c, d
    return best


def _pick_opponent(unit: UnitState, opponents: list[UnitState], max_range: float) -> UnitState | None:
    """Nearest opponent with non-Medivac priority."""
    fighters = [o for o in opponents if not o.archetype.is_healer]
    found = _nearest(unit, fighters, max_range)
    if found is not None:
        return found
    healers = [o for o in opponents if o.archetype.is_healer]
    return _nearest(unit, healers, max_range)


def medivac_controller_step(
    medivac: UnitState,
    living_groupmates: list[UnitState],
    target: tuple[float, float],
) -> Command:
    """Enemy Medivac behavior: keep moving when solo, halt to heal when
    attacked with groupmates, hold otherwise; resumes the step after the
    last groupmate dies."""
    if not living_groupmates:
        dx, dy = _toward(medivac.x, medivac.y, target[0], target[1], medivac.archetype.move_speed)
        return Command(Verb.MOVE, medivac.unit_id, dx=dx, dy=dy)
    if medivac.was_attacked:
        patient = min(living_groupmates, key=lambda u: (u.health, u.unit_id))
        if medivac.distance_to(patient) <= medivac.archetype.heal_range:
            if medivac.cooldown_remaining == 0:
                return Command(Verb.HEAL, medivac.unit_id, target_id=patient.unit_id)
            return Command(Verb.STOP, medivac.unit_id)
        dx, dy = _toward(medivac.x, medivac.y, patient.x, patient.y, medivac.archetype.move_speed)
        return Command(Verb.MOVE, medivac.unit_id, dx=dx, dy=dy)
    return Command(Verb.STOP, medivac.unit_id)


def pursuit_controller_step(group: list[UnitState], target_base: tuple[float, float]) -> list[Command]:
    """Pursuit units head for their base every step and never attack."""
    commands = []
    for u in group:
        if not u.alive:
            continue
        if u.archetype.is_healer:
            mates = [m for m in group if m.alive and m.unit_id != u.unit_id]
            commands.append(medivac_controller_step(u, mates, target_base))
            continue
        dx, dy = _toward(u.x, u.y, target_base[0], target_base[1], u.archetype.move_speed)
        commands.append(Command(Verb.MOVE, u.unit_id, dx=dx, dy=dy))
    return commands


def defense_controller_step(
    group: list[UnitState],
    allied_base: tuple[float, float],
    opponents: list[UnitState],
    *,
    advance: bool = True,
) -> list[Command]:
    """Defense units advance on the contested base until provoked (attacked
    or an opponent in sight), then engage: attack the nearest opponent in
    range, else close on the nearest visible one, non-Medivac priority.
    Medivacs obey the Medivac controller instead. With advance=False they
    hold position instead of advancing."""
    commands = []
    living_opponents = sorted((o for o in opponents if o.alive), key=lambda o: o.unit_id)
    for u in group:
        if not u.alive:
            continue
        if u.archetype.is_healer:
            mates = [m for m in group if m.alive and m.unit_id != u.unit_id]
            commands.append(medivac_controller_step(u, mates, allied_base))
            continue
        visible = _pick_opponent(u, living_opponents, u.archetype.sight_range)
        if u.was_attacked or visible is not None:
            in_range = _pick_opponent(u, living_opponents, u.archetype.attack_range)
            if in_range is not None:
                if u.cooldown_remaining == 0:
                    commands.append(Command(Verb.ATTACK, u.unit_id, target_id=in_range.unit_id))
                else:
                    commands.append(Command(Verb.STOP, u.unit_id))
                continue
            if visible is not None:
                dx, dy = _toward(u.x, u.y, visible.x, visible.y, u.archetype.move_speed)
                commands.append(Command(Verb.MOVE, u.unit_id, dx=dx, dy=dy))
                continue
            # Attacked but blind: resume mission movement.
        if advance:
            dx, dy = _toward(u.x, u.y, allied_base[0], allied_base[1], u.archetype.move_speed)
            commands.append(Command(Verb.MOVE, u.unit_id, dx=dx, dy=dy))
        else:
            commands.append(Command(Verb.STOP, u.unit_id))
    return commands


# ---------------------------------------------------------------------------
# Reference stepper


@dataclass
class StepEvents:
    """What one resolved step did, for reward/termination bookkeeping."""

    enemy_damage_net: float  # signed: enemy heals subtract
    enemy_kills: int
    occupied_subtask: int  # -1 when no base was occupied
    enemies_alive: bool
    agent_fizzles: int  # agent commands that failed resolution-time checks

    @property
    def any_base_occupied(self) -> bool:
        return self.occupied_subtask >= 0


# Agent action encoding (SMAC-style): 0 noop (dead only), 1 stop,
# 2..5 move N/S/E/W, 6+j act on slot j (attack enemy j, or heal ally j
# for healer archetypes).
ACTION_NOOP = 0
ACTION_STOP = 1
ACTION_MOVE_N = 2
ACTION_MOVE_S = 3
ACTION_MOVE_E = 4
ACTION_MOVE_W = 5
ACTION_TARGET_BASE = 6

_MOVE_DIRS = {
    ACTION_MOVE_N: (0.0, 1.0),
    ACTION_MOVE_S: (0.0, -1.0),
    ACTION_MOVE_E: (1.0, 0.0),
    ACTION_MOVE_W: (-1.0, 0.0),
}


class ReferenceSimulation:
    """Pure-op lockstep stepper over UnitState values.

    Allies must come first in unit_id order (ids 0..n_agents-1), enemies
    after. Slow by design — this is the semantic reference the fast path
    is tested against.
    """

    def __init__(
        self,
        units: list[UnitState],
        bases: list[tuple[float, float]],
        kinds: list[int],
        bounds: tuple[float, float],
        table: ArchetypeTable,
        cfg: EngineConfig,
    ):
        self.units = [replace(u) for u in units]
        self.bases = [tuple(b) for b in bases]
        self.kinds = list(kinds)
        self.bounds = bounds
        self.table = table
        self.cfg = cfg
        self.n_agents = sum(1 for u in units if u.allegiance == ALLY)
        for i, u in enumerate(units):
            if u.unit_id != i:
                raise ValueError("unit ids must be dense and ascending")
            if (u.allegiance == ALLY) != (i < self.n_agents):
                raise ValueError("allies must precede enemies in unit_id order")

    # -- queries -----------------------------------------------------------

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_enemies(self) -> int:
        return self.n_units - self.n_agents

    def enemy_units(self) -> list[UnitState]:
        return self.units[self.n_agents :]

    def arrays(self) -> dict[str, np.ndarray]:
        """Snapshot state as struct-of-arrays (same layout as the fast path)."""
        n = self.n_units
        out = {
            "arch": np.empty(n, np.int64),
            "pos": np.empty((n, 2), np.float64),
            "health": np.empty(n, np.float64),
            "cooldown": np.empty(n, np.int64),
            "alive": np.empty(n, np.bool_),
            "attacked": np.empty(n, np.bool_),
            "subtask": np.empty(n, np.int64),
        }
        from .config import ARCHETYPE_NAMES

        for i, u in enumerate(self.units):
            out["arch"][i] = ARCHETYPE_NAMES.index(u.archetype.name)
            out["pos"][i, 0] = u.x
            out["pos"][i, 1] = u.y
            out["health"][i] = u.health
            out["cooldown"][i] = u.cooldown_remaining
            out["alive"][i] = u.alive
            out["attacked"][i] = u.was_attacked
            out["subtask"][i] = u.subtask_index
        return out

    # -- stepping ----------------------------------------------------------

    def enemy_commands(self) -> list[Command]:
        """Controller commands for every living enemy, ascending unit_id."""
        commands: list[Command] = []
        opponents = [u for u in self.units[: self.n_agents] if u.alive]
        by_subtask: dict[int, list[UnitState]] = {}
        for u in self.enemy_units():
            by_subtask.setdefault(u.subtask_index, []).append(u)
        for s in sorted(by_subtask):
            group = by_subtask[s]
            base = self.bases[s]
            if self.kinds[s] == PURSUIT:
                commands.extend(pursuit_controller_step(group, base))
            else:
                commands.extend(
                    defense_controller_step(
                        group,
                        base,
                        opponents,
                        advance=self.cfg.defense_enemy_mode == "advance",
                    )
                )
        commands.sort(key=lambda c: c.actor_id)
        return commands

    def decode_agent_action(self, agent_id: int, action: int) -> Command:
        u = self.units[agent_id]
        if action in (ACTION_NOOP, ACTION_STOP):
            return Command(Verb.STOP, agent_id)
        if action in _MOVE_DIRS:
            dx, dy = _MOVE_DIRS[action]
            sp = u.archetype.move_speed
            return Command(Verb.MOVE, agent_id, dx=dx * sp, dy=dy * sp)
        slot = action - ACTION_TARGET_BASE
        if u.archetype.is_healer:
            return Command(Verb.HEAL, agent_id, target_id=slot)
        return Command(Verb.ATTACK, agent_id, target_id=self.n_agents + slot)

    def step(self, agent_actions) -> StepEvents:
        # 1. collect commands against start-of-step state
        commands: dict[int, Command] = {}
        for a in range(self.n_agents):
            if self.units[a].alive:
                commands[a] = self.decode_agent_action(a, int(agent_actions[a]))
        for c in self.enemy_commands():
            commands[c.actor_id] = c

        enemy_hp_before = sum(u.health for u in self.enemy_units())

        # 2. resolve ascending unit_id, revalidating against current state
        fizzles = 0
        kills = 0
        for i in range(self.n_units):
            c = commands.get(i)
            if c is None or not self.units[i].alive:
                continue
            if c.verb == Verb.STOP:
                continue
            if c.verb == Verb.MOVE:
                self.units[i] = _apply_displacement(self.units[i], c.dx, c.dy, self.bounds)
                continue
            try:
                if not 0 <= c.target_id < self.n_units:
                    raise CommandRejected("target slot out of range")
                if c.verb == Verb.ATTACK:
                    attacker, target = resolve_attack(self.units[i], self.units[c.target_id])
                    self.units[i] = attacker
                    self.units[c.target_id] = target
                    if not target.alive and target.allegiance == ENEMY:
                        kills += 1
                else:
                    healer, target = resolve_heal(self.units[i], self.units[c.target_id])
                    self.units[i] = healer
                    self.units[c.target_id] = target
            except CommandRejected:
                if i < self.n_agents:
                    fizzles += 1

        enemy_hp_after = sum(u.health for u in self.enemy_units())

        # 3. cooldown tick at end of step, so the state visible between
        # steps reflects true readiness for the next one
        for i, u in enumerate(self.units):
            if u.alive and u.cooldown_remaining > 0:
                self.units[i] = replace(u, cooldown_remaining=u.cooldown_remaining - 1)

        # 4. outcome scan: occupation first (ascending unit_id), then survival
        occupied = -1
        for u in self.enemy_units():
            if u.alive:
                bx, by = self.bases[u.subtask_index]
                if u.distance_to_point(bx, by) <= self.cfg.occupation_radius:
                    occupied = u.subtask_index
                    break
        return StepEvents(
            enemy_damage_net=enemy_hp_before - enemy_hp_after,
            enemy_kills=kills,
            occupied_subtask=occupied,
            enemies_alive=any(u.alive for u in self.enemy_units()),
            agent_fizzles=fizzles,
        )
