"""Reference policies: a division-of-labor oracle, a no-DOL ablation that
collapses every squad onto subtask 0, and a uniform-random policy.

The oracle is deliberately rule-based: it is a solvability witness and an
engine regression guard, not a learned agent. Policies read the true
simulation state but honor the same visibility radius the observation
builder uses, and they only ever emit actions the availability mask allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import CompositeTaskSpec, resolve_ally_assignment
from .config import PURSUIT
from .engine import (
    ACTION_MOVE_E,
    ACTION_MOVE_N,
    ACTION_MOVE_S,
    ACTION_MOVE_W,
    ACTION_NOOP,
    ACTION_STOP,
    ACTION_TARGET_BASE,
)
from .env import CombatEnv


@dataclass(frozen=True)
class SquadAssignment:
    """Fixed agent -> subtask mapping, decided at reset."""

    subtask_of: tuple[int, ...]

    def __getitem__(self, agent_id: int) -> int:
        return self.subtask_of[agent_id]

    @property
    def n_agents(self) -> int:
        return len(self.subtask_of)


def assign_squads(spec: CompositeTaskSpec) -> SquadAssignment:
    """Partition agents to mirror each subtask's enemy roster by archetype
    (the catalog's per-subtask ally rosters); counts are proportional to
    enemy counts by construction, ties resolved toward lower subtasks by
    the spawn ordering."""
    mapping = [
        s_idx
        for s_idx, roster in enumerate(resolve_ally_assignment(spec))
        for _ in roster
    ]
    return SquadAssignment(tuple(mapping))


def _cardinal_toward(px: float, py: float, tx: float, ty: float) -> int:
    """Best single N/S/E/W move toward a point; stop when already there."""
    dx, dy = tx - px, ty - py
    if abs(dx) < 1e-9 and abs(dy) < 1e-9:
        return ACTION_STOP
    if abs(dx) >= abs(dy):
        return ACTION_MOVE_E if dx > 0 else ACTION_MOVE_W
    return ACTION_MOVE_N if dy > 0 else ACTION_MOVE_S


def _project_to_segment(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> tuple[float, float]:
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return ax, ay
    t = ((px - ax) * abx + (py - ay) * aby) / denom
    t = min(1.0, max(0.0, t))
    return ax + t * abx, ay + t * aby


class Policy:
    name = "policy"

    def reset(self, env: CombatEnv, seed: int) -> None:
        pass

    def act(self, env: CombatEnv) -> np.ndarray:
        raise NotImplementedError


class DolOraclePolicy(Policy):
    """Squads mirror the subtask rosters; combat agents advance on their
    assigned region and focus-fire the lowest-health visible assigned enemy
    in range (ties by lowest id); Medivacs heal the lowest-health-fraction
    squadmate; pursuit squads cut the enemy's base-bound line."""

    name = "oracle"

    def __init__(self, assignment: SquadAssignment | None = None):
        self._fixed_assignment = assignment
        self.assignment: SquadAssignment | None = None

    def reset(self, env: CombatEnv, seed: int) -> None:
        self.assignment = self._fixed_assignment or assign_squads(env.spec)
        if self.assignment.n_agents != env.n_agents:
            raise ValueError("assignment does not cover all agents")

    def act(self, env: CombatEnv) -> np.ndarray:
        arr = env.sim_arrays()
        pos = arr["pos"]
        alive = arr["alive"]
        health = arr["health"]
        cooldown = arr["cooldown"]
        arch = arr["arch"]
        subtask = arr["subtask"]
        n_agents = env.n_agents
        n = pos.shape[0]
        stats = env.table.stat_arrays()
        # Distances from every agent to every unit, same hypot the masks use.
        dist = np.hypot(
            pos[:n_agents, 0:1] - pos[:, 0], pos[:n_agents, 1:2] - pos[:, 1]
        )
        actions = np.full(n_agents, ACTION_NOOP, np.int64)
        assign = self.assignment.subtask_of

        # Squad-shared focus per subtask: lowest-health enemy (ties by id)
        # visible to any living squad member — shared targeting keeps the
        # squad's fire concentrated even when per-agent ranges differ.
        # Threat ordering: while an enemy Medivac lives, keep one enemy
        # fighter alive to pin it in place (it only flees once its last
        # groupmate dies) and burn the Medivac down second-to-last; an
        # attacked Medivac wastes its heals on a full-health groupmate.
        focus: dict[int, int | None] = {}
        pool_of: dict[int, set[int]] = {}
        for s in set(assign):
            fighters = [
                j for j in range(n_agents, n)
                if alive[j] and subtask[j] == s and stats["heal_amount"][arch[j]] == 0.0
            ]
            healers = [
                j for j in range(n_agents, n)
                if alive[j] and subtask[j] == s and stats["heal_amount"][arch[j]] > 0.0
            ]
            if healers and len(fighters) <= 1:
                pool = set(healers)
            else:
                pool = set(fighters)
            pool_of[s] = pool
            members = [j for j in range(n_agents) if alive[j] and assign[j] == s]
            seen: set[int] = set()
            for m in members:
                sight = stats["sight_range"][arch[m]]
                for j in pool:
                    if dist[m, j] <= sight:
                        seen.add(j)
            # Ties at equal health break toward the enemy nearest the squad
            # (reachable by the most members), then by id: full-health opening
            # volleys converge instead of splitting across reachable targets.
            if seen:
                nearest_d = {j: min(dist[m, j] for m in members) for j in seen}
                focus[s] = min(seen, key=lambda j: (health[j], nearest_d[j], j))
            else:
                focus[s] = None

        # Volley allocation per squad: walk targets in priority order and
        # commit only as many ready shooters as each needs this volley;
        # surplus shooters start on the next target instead of overkilling.
        volley: dict[int, int] = {}
        for s in set(assign):
            ready = [
                a
                for a in range(n_agents)
                if alive[a] and assign[a] == s and cooldown[a] == 0
                and stats["heal_amount"][arch[a]] == 0.0
            ]
            targets = sorted(
                (j for j in pool_of[s] if any(
                    dist[a, j] <= stats["attack_range"][arch[a]] for a in ready
                )),
                key=lambda j: (health[j], dist[:, j][ready].min() if ready else 0.0, j),
            )
            unassigned = list(ready)
            for j in targets:
                need = health[j]
                for a in list(unassigned):
                    if need <= 0:
                        break
                    if dist[a, j] <= stats["attack_range"][arch[a]]:
                        volley[a] = j
                        unassigned.remove(a)
                        need -= stats["attack_damage"][arch[a]]
            for a in list(unassigned):
                reachable = [
                    j for j in pool_of[s] if dist[a, j] <= stats["attack_range"][arch[a]]
                ]
                if reachable:
                    volley[a] = min(reachable, key=lambda j: (health[j], j))
                    unassigned.remove(a)

        for a in range(n_agents):
            if not alive[a]:
                continue
            s = assign[a]
            region = env.layout.region_centers[s]
            if stats["heal_amount"][arch[a]] > 0.0:
                actions[a] = self._heal_action(
                    a, s, assign, alive, health, arch, pos, dist, cooldown, stats, region
                )
            elif a in volley:
                actions[a] = ACTION_TARGET_BASE + (volley[a] - n_agents)
            else:
                actions[a] = self._combat_action(
                    a, s, env, alive, health, subtask, pos, dist, cooldown,
                    stats, arch, region, focus[s], pool_of[s], n_agents, n,
                )
        return actions

    def _combat_action(
        self, a, s, env, alive, health, subtask, pos, dist, cooldown,
        stats, arch, region, focus, pool, n_agents, n,
    ) -> int:
        atk_range = stats["attack_range"][arch[a]]
        assigned = [j for j in range(n_agents, n) if alive[j] and subtask[j] == s]
        fighters_alive = any(stats["heal_amount"][arch[j]] == 0.0 for j in assigned)
        in_range = [j for j in pool if dist[a, j] <= atk_range]
        if in_range:
            if cooldown[a] > 0:
                return ACTION_STOP
            target = focus if focus in in_range else min(in_range, key=lambda j: (health[j], j))
            return ACTION_TARGET_BASE + (target - n_agents)
        if focus is not None:
            focus_is_healer = stats["heal_amount"][arch[focus]] > 0.0
            if focus_is_healer and not fighters_alive:
                # Lone Medivac bolting for the base: cut its flee line off
                # rather than tail-chasing a faster unit.
                base = env.layout.bases[s]
                ix, iy = _project_to_segment(
                    pos[a, 0], pos[a, 1], pos[focus, 0], pos[focus, 1], base[0], base[1]
                )
                return _cardinal_toward(pos[a, 0], pos[a, 1], ix, iy)
            return _cardinal_toward(pos[a, 0], pos[a, 1], pos[focus, 0], pos[focus, 1])
        if env.kinds[s] == PURSUIT and assigned:
            # Intercept: head for the nearest point on the flee line to the
            # squad centroid (region center stands in for unseen enemies).
            mates = [j for j in range(n_agents) if alive[j] and self.assignment[j] == s]
            cx = float(np.mean([pos[j, 0] for j in mates])) if mates else pos[a, 0]
            cy = float(np.mean([pos[j, 1] for j in mates])) if mates else pos[a, 1]
            base = env.layout.bases[s]
            ix, iy = _project_to_segment(cx, cy, region[0], region[1], base[0], base[1])
            return _cardinal_toward(pos[a, 0], pos[a, 1], ix, iy)
        # No contact yet: advance as a lateral line abreast, waiting for
        # laggards, so the whole squad enters weapons range on the same
        # step — synchronized volleys let the resolution-order edge (we
        # fire before enemy return fire each step) compound.
        fighter_mates = [
            j
            for j in range(n_agents)
            if alive[j] and self.assignment[j] == s
            and stats["heal_amount"][arch[j]] == 0.0
        ]
        if len(fighter_mates) > 1 and a in fighter_mates:
            rank = fighter_mates.index(a)
            cx = float(np.mean([pos[j, 0] for j in fighter_mates]))
            slot_x = cx + 1.4 * (rank - (len(fighter_mates) - 1) / 2.0)
            if abs(slot_x - pos[a, 0]) > 0.7:
                return ACTION_MOVE_E if slot_x > pos[a, 0] else ACTION_MOVE_W
            y_min = min(pos[j, 1] for j in fighter_mates)
            toward_enemy = region[1] >= pos[a, 1]
            if toward_enemy and pos[a, 1] > y_min + 0.6:
                return ACTION_STOP
        if math.hypot(region[0] - pos[a, 0], region[1] - pos[a, 1]) < 1.0:
            return ACTION_STOP
        return _cardinal_toward(pos[a, 0], pos[a, 1], region[0], region[1])

    def _heal_action(
        self, a, s, assign, alive, health, arch, pos, dist, cooldown, stats, region
    ) -> int:
        n_agents = len(assign)
        sight = stats["sight_range"][arch[a]]
        heal_range = stats["heal_range"][arch[a]]
        mates = [j for j in range(n_agents) if j != a and alive[j] and assign[j] == s]
        hurt = [
            j
            for j in mates
            if health[j] < stats["max_health"][arch[j]] and dist[a, j] <= sight
        ]
        if hurt:
            frac = lambda j: health[j] / stats["max_health"][arch[j]]
            patient = min(hurt, key=lambda j: (frac(j), j))
            if dist[a, patient] <= heal_range:
                if cooldown[a] == 0:
                    return ACTION_TARGET_BASE + patient
                return ACTION_STOP
            return _cardinal_toward(pos[a, 0], pos[a, 1], pos[patient, 0], pos[patient, 1])
        if mates:
            nearest = min(mates, key=lambda j: (dist[a, j], j))
            if dist[a, nearest] > 3.0:
                return _cardinal_toward(pos[a, 0], pos[a, 1], pos[nearest, 0], pos[nearest, 1])
            return ACTION_STOP
        return _cardinal_toward(pos[a, 0], pos[a, 1], region[0], region[1])


class NoDolPolicy(DolOraclePolicy):
    """Negative control: every agent converges on subtask 0 and applies the
    oracle micro there, ignoring all other subtasks."""

    name = "no_dol"

    def reset(self, env: CombatEnv, seed: int) -> None:
        self.assignment = SquadAssignment((0,) * env.n_agents)


class RandomPolicy(Policy):
    """Uniform over available actions, seeded per episode."""

    name = "random"

    def __init__(self):
        self._rng = np.random.default_rng(0)

    def reset(self, env: CombatEnv, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def act(self, env: CombatEnv) -> np.ndarray:
        masks = env.availability_masks()
        # Unavailable entries zero out; valid draws are strictly positive,
        # so argmax is uniform over the available set.
        scores = self._rng.random(masks.shape) * masks
        return scores.argmax(axis=1)


POLICIES = {
    "oracle": DolOraclePolicy,
    "no_dol": NoDolPolicy,
    "random": RandomPolicy,
}


def make_policy(name: str) -> Policy:
    if name not in POLICIES:
        raise KeyError(f"unknown policy {name!r}; valid: {', '.join(sorted(POLICIES))}")
    return POLICIES[name]()
