"""Numba-jitted hot path: step resolution, observations, availability masks.

Mirrors :class:`ctcsim.engine.ReferenceSimulation` exactly — including the
floating-point formulas (math.hypot, identical clamp expressions) so that
both steppers produce byte-identical episode streams. Any semantic change
here must be made in the reference stepper too; the parity test enforces it.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .config import ALLY, ArchetypeTable, EngineConfig, PURSUIT
from .engine import StepEvents, UnitState

ENTITY_FEATURES = 8  # visible, dist, rel_x, rel_y, health_frac, onehot x3
OWN_FEATURES = 6  # health_frac, onehot x3, pos_x, pos_y
FIXED_ACTIONS = 6  # noop, stop, move N/S/E/W


def obs_length(n_agents: int, n_enemies: int) -> int:
    return ENTITY_FEATURES * (n_enemies + n_agents - 1) + OWN_FEATURES


@njit(cache=True)
def _step_kernel(
    arch,  # i8[n]
    subtask,  # i8[n]
    pos,  # f8[n,2]
    health,  # f8[n]
    cooldown,  # i8[n]
    alive,  # b1[n]
    attacked,  # b1[n]
    s_maxhp,
    s_dmg,
    s_heal,
    s_atk_r,
    s_heal_r,
    s_sight,
    s_speed,
    s_cd,
    kind_pursuit,  # b1[n_subtasks]
    base_xy,  # f8[n_subtasks,2]
    bound_w,
    bound_h,
    defense_advance,  # b1
    occupation_radius,
    actions,  # i8[n_agents]
    n_agents,
):
    n = arch.shape[0]

    # 1. command collection against start-of-step state
    verb = np.zeros(n, np.int64)  # 0 stop, 1 move, 2 attack, 3 heal
    tgt = np.full(n, -1, np.int64)
    disp = np.zeros((n, 2), np.float64)

    for i in range(n_agents):
        if not alive[i]:
            continue
        a = actions[i]
        if 2 <= a <= 5:
            verb[i] = 1
            sp = s_speed[arch[i]]
            if a == 2:
                disp[i, 1] = sp
            elif a == 3:
                disp[i, 1] = -sp
            elif a == 4:
                disp[i, 0] = sp
            else:
                disp[i, 0] = -sp
        elif a >= 6:
            slot = a - 6
            if s_heal[arch[i]] > 0.0:
                verb[i] = 3
                tgt[i] = slot
            else:
                verb[i] = 2
                tgt[i] = n_agents + slot

    for i in range(n_agents, n):
        if not alive[i]:
            continue
        st = subtask[i]
        bx = base_xy[st, 0]
        by = base_xy[st, 1]
        sp = s_speed[arch[i]]
        if s_heal[arch[i]] > 0.0:
            # Medivac features: solo -> keep moving; grouped & attacked ->
            # halt to heal the lowest-health groupmate; grouped & calm -> hold.
            mate = -1
            mate_hp = np.inf
            for j in range(n_agents, n):
                if j != i and alive[j] and subtask[j] == st:
                    if health[j] < mate_hp:
                        mate_hp = health[j]
                        mate = j
            if mate < 0:
                dx, dy = bx - pos[i, 0], by - pos[i, 1]
                dist = math.hypot(dx, dy)
                if dist > 0.0:
                    verb[i] = 1
                    if dist <= sp:
                        disp[i, 0], disp[i, 1] = dx, dy
                    else:
                        scale = sp / dist
                        disp[i, 0], disp[i, 1] = dx * scale, dy * scale
            elif attacked[i]:
                dx, dy = pos[mate, 0] - pos[i, 0], pos[mate, 1] - pos[i, 1]
                dist = math.hypot(dx, dy)
                if dist <= s_heal_r[arch[i]]:
                    if cooldown[i] == 0:
                        verb[i] = 3
                        tgt[i] = mate
                elif dist > 0.0:
                    verb[i] = 1
                    if dist <= sp:
                        disp[i, 0], disp[i, 1] = dx, dy
                    else:
                        scale = sp / dist
                        disp[i, 0], disp[i, 1] = dx * scale, dy * scale
            continue
        if kind_pursuit[st]:
            dx, dy = bx - pos[i, 0], by - pos[i, 1]
            dist = math.hypot(dx, dy)
            if dist > 0.0:
                verb[i] = 1
                if dist <= sp:
                    disp[i, 0], disp[i, 1] = dx, dy
                else:
                    scale = sp / dist
                    disp[i, 0], disp[i, 1] = dx * scale, dy * scale
            continue
        # Defense fighter: engage when provoked, else mission movement.
        # Non-Medivac priority applies independently to the in-range pick
        # and the visible pick (a healer in range is attacked when no
        # fighter is in range, even if a fighter is visible farther out).
        sight = s_sight[arch[i]]
        atk_r = s_atk_r[arch[i]]
        f_vis = -1
        f_vis_d = np.inf
        f_rng = -1
        f_rng_d = np.inf
        h_vis = -1
        h_vis_d = np.inf
        h_rng = -1
        h_rng_d = np.inf
        for j in range(n_agents):  # opponents of enemies are the allies
            if not alive[j]:
                continue
            d = math.hypot(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1])
            if s_heal[arch[j]] > 0.0:
                if d <= sight and d < h_vis_d:
                    h_vis_d = d
                    h_vis = j
                if d <= atk_r and d < h_rng_d:
                    h_rng_d = d
                    h_rng = j
            else:
                if d <= sight and d < f_vis_d:
                    f_vis_d = d
                    f_vis = j
                if d <= atk_r and d < f_rng_d:
                    f_rng_d = d
                    f_rng = j
        vis = f_vis if f_vis >= 0 else h_vis
        rng = f_rng if f_rng >= 0 else h_rng
        engaged = attacked[i] or vis >= 0
        if engaged and rng >= 0:
            if cooldown[i] == 0:
                verb[i] = 2
                tgt[i] = rng
            continue
        if engaged and vis >= 0:
            dx, dy = pos[vis, 0] - pos[i, 0], pos[vis, 1] - pos[i, 1]
            dist = math.hypot(dx, dy)
            if dist > 0.0:
                verb[i] = 1
                if dist <= sp:
                    disp[i, 0], disp[i, 1] = dx, dy
                else:
                    scale = sp / dist
                    disp[i, 0], disp[i, 1] = dx * scale, dy * scale
            continue
        if defense_advance:
            dx, dy = bx - pos[i, 0], by - pos[i, 1]
            dist = math.hypot(dx, dy)
            if dist > 0.0:
                verb[i] = 1
                if dist <= sp:
                    disp[i, 0], disp[i, 1] = dx, dy
                else:
                    scale = sp / dist
                    disp[i, 0], disp[i, 1] = dx * scale, dy * scale

    enemy_hp_before = 0.0
    for i in range(n_agents, n):
        enemy_hp_before += health[i]

    # 2. resolution in ascending unit_id, revalidating as state mutates
    fizzles = 0
    kills = 0
    for i in range(n):
        if not alive[i]:
            continue
        v = verb[i]
        if v == 0:
            continue
        if v == 1:
            x = pos[i, 0] + disp[i, 0]
            y = pos[i, 1] + disp[i, 1]
            pos[i, 0] = min(max(x, 0.0), bound_w)
            pos[i, 1] = min(max(y, 0.0), bound_h)
            continue
        j = tgt[i]
        ok = 0 <= j < n and j != i and alive[i] and cooldown[i] == 0
        if ok:
            ok = alive[j]
        if v == 2:
            ok = ok and (j < n_agents) != (i < n_agents) and s_dmg[arch[i]] > 0.0
            if ok:
                d = math.hypot(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1])
                ok = d <= s_atk_r[arch[i]]
            if ok:
                health[j] = max(0.0, health[j] - s_dmg[arch[i]])
                attacked[j] = True
                if health[j] <= 0.0:
                    alive[j] = False
                    if j >= n_agents:
                        kills += 1
                cooldown[i] = s_cd[arch[i]]
            elif i < n_agents:
                fizzles += 1
        else:
            ok = ok and (j < n_agents) == (i < n_agents) and s_heal[arch[i]] > 0.0
            if ok:
                d = math.hypot(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1])
                ok = d <= s_heal_r[arch[i]]
            if ok:
                health[j] = min(s_maxhp[arch[j]], health[j] + s_heal[arch[i]])
                cooldown[i] = s_cd[arch[i]]
            elif i < n_agents:
                fizzles += 1

    enemy_hp_after = 0.0
    enemies_alive = False
    for i in range(n_agents, n):
        enemy_hp_after += health[i]
        if alive[i]:
            enemies_alive = True

    # 3. cooldown tick at end of step, so the state visible between steps
    # reflects true readiness for the next one
    for i in range(n):
        if alive[i] and cooldown[i] > 0:
            cooldown[i] -= 1

    # 4. occupation scan (lowest unit_id wins the tie)
    occupied = -1
    for i in range(n_agents, n):
        if alive[i]:
            st = subtask[i]
            d = math.hypot(base_xy[st, 0] - pos[i, 0], base_xy[st, 1] - pos[i, 1])
            if d <= occupation_radius:
                occupied = st
                break

    return enemy_hp_before - enemy_hp_after, kills, occupied, enemies_alive, fizzles


@njit(cache=True)
def _obs_kernel(arch, pos, health, alive, s_maxhp, s_sight, n_agents, bound_w, bound_h, out):
    """Per-agent SMAC-style feature vectors.

    Slot order: all enemies by unit_id, allies (excluding self) by unit_id,
    own block last. Entries for dead or out-of-sight entities stay all-zero.
    """
    n = arch.shape[0]
    n_enemies = n - n_agents
    out[:] = 0.0
    for a in range(n_agents):
        if not alive[a]:
            continue
        sight = s_sight[arch[a]]
        for j in range(n):
            if j == a:
                continue
            # enemies first, then other allies
            if j < n_agents:
                idx = n_enemies + (j if j < a else j - 1)
            else:
                idx = j - n_agents
            off = idx * ENTITY_FEATURES
            if alive[j]:
                dx = pos[j, 0] - pos[a, 0]
                dy = pos[j, 1] - pos[a, 1]
                d = math.hypot(dx, dy)
                if d <= sight:
                    out[a, off] = 1.0
                    out[a, off + 1] = d / sight
                    out[a, off + 2] = dx / sight
                    out[a, off + 3] = dy / sight
                    out[a, off + 4] = health[j] / s_maxhp[arch[j]]
                    out[a, off + 5 + arch[j]] = 1.0
        off = (n - 1) * ENTITY_FEATURES
        out[a, off] = health[a] / s_maxhp[arch[a]]
        out[a, off + 1 + arch[a]] = 1.0
        out[a, off + 4] = pos[a, 0] / bound_w
        out[a, off + 5] = pos[a, 1] / bound_h


@njit(cache=True)
def _mask_kernel(arch, pos, health, alive, s_atk_r, s_heal_r, s_heal, n_agents, out):
    """Availability: noop iff dead; stop/moves iff alive; slot j iff the
    target (enemy j, or ally j for healers) is alive and in range."""
    n = arch.shape[0]
    n_enemies = n - n_agents
    out[:] = False
    for a in range(n_agents):
        if not alive[a]:
            out[a, 0] = True
            continue
        for k in range(1, 6):
            out[a, k] = True
        healer = s_heal[arch[a]] > 0.0
        reach = s_heal_r[arch[a]] if healer else s_atk_r[arch[a]]
        for slot in range(n_enemies):
            j = slot if healer else n_agents + slot
            if healer and (j == a or j >= n_agents):
                continue
            if not alive[j]:
                continue
            d = math.hypot(pos[j, 0] - pos[a, 0], pos[j, 1] - pos[a, 1])
            if d <= reach:
                out[a, 6 + slot] = True


@njit(cache=True)
def _env_step_kernel(
    arch,
    subtask,
    pos,
    health,
    cooldown,
    alive,
    attacked,
    s_maxhp,
    s_dmg,
    s_heal,
    s_atk_r,
    s_heal_r,
    s_sight,
    s_speed,
    s_cd,
    kind_pursuit,
    base_xy,
    bound_w,
    bound_h,
    defense_advance,
    occupation_radius,
    actions,  # i8[A] raw
    masks_now,  # b1[A, K] availability for this step
    effective,  # i8[A] out: post-coercion joint action
    n_agents,
    obs_out,  # f4[A, obs_len] out: next observations
    masks_out,  # b1[A, K] out: next availability
):
    """One full env step in a single dispatch: coerce invalid actions to
    stop (noop when dead), resolve the step, then rebuild observations and
    masks for the next decision point."""
    coerced = 0
    for a in range(n_agents):
        act = actions[a]
        if act < 0 or act >= masks_now.shape[1] or not masks_now[a, act]:
            effective[a] = 1 if alive[a] else 0
            coerced += 1
        else:
            effective[a] = act
    damage, kills, occupied, enemies_alive, fizzles = _step_kernel(
        arch, subtask, pos, health, cooldown, alive, attacked,
        s_maxhp, s_dmg, s_heal, s_atk_r, s_heal_r, s_sight, s_speed, s_cd,
        kind_pursuit, base_xy, bound_w, bound_h, defense_advance,
        occupation_radius, effective, n_agents,
    )
    _obs_kernel(arch, pos, health, alive, s_maxhp, s_sight, n_agents, bound_w, bound_h, obs_out)
    _mask_kernel(arch, pos, health, alive, s_atk_r, s_heal_r, s_heal, n_agents, masks_out)
    return damage, kills, occupied, enemies_alive, fizzles, coerced


class FastSimulation:
    """Struct-of-arrays stepper sharing semantics with ReferenceSimulation."""

    def __init__(
        self,
        units: list[UnitState],
        bases: list[tuple[float, float]],
        kinds: list[int],
        bounds: tuple[float, float],
        table: ArchetypeTable,
        cfg: EngineConfig,
    ):
        from .config import ARCHETYPE_NAMES

        n = len(units)
        self.n_agents = sum(1 for u in units if u.allegiance == ALLY)
        for i, u in enumerate(units):
            if u.unit_id != i:
                raise ValueError("unit ids must be dense and ascending")
            if (u.allegiance == ALLY) != (i < self.n_agents):
                raise ValueError("allies must precede enemies in unit_id order")
        self.table = table
        self.cfg = cfg
        self.bounds = bounds
        self.bases = [tuple(b) for b in bases]
        self.kinds = list(kinds)
        self.arch = np.array([ARCHETYPE_NAMES.index(u.archetype.name) for u in units], np.int64)
        self.subtask = np.array([u.subtask_index for u in units], np.int64)
        self.pos = np.array([[u.x, u.y] for u in units], np.float64)
        self.health = np.array([u.health for u in units], np.float64)
        self.cooldown = np.array([u.cooldown_remaining for u in units], np.int64)
        self.alive = np.array([u.alive for u in units], np.bool_)
        self.attacked = np.array([u.was_attacked for u in units], np.bool_)
        self.base_xy = np.array(self.bases, np.float64).reshape(len(self.bases), 2)
        self.kind_pursuit = np.array([k == PURSUIT for k in self.kinds], np.bool_)
        s = table.stat_arrays()
        self._stats = (
            s["max_health"],
            s["attack_damage"],
            s["heal_amount"],
            s["attack_range"],
            s["heal_range"],
            s["sight_range"],
            s["move_speed"],
            s["cooldown_steps"],
        )

        self._arrays = {
            "arch": self.arch,
            "pos": self.pos,
            "health": self.health,
            "cooldown": self.cooldown,
            "alive": self.alive,
            "attacked": self.attacked,
            "subtask": self.subtask,
        }

    @property
    def n_units(self) -> int:
        return self.arch.shape[0]

    @property
    def n_enemies(self) -> int:
        return self.n_units - self.n_agents

    def arrays(self) -> dict[str, np.ndarray]:
        return self._arrays

    def step(self, agent_actions) -> StepEvents:
        actions = np.asarray(agent_actions, np.int64)
        damage, kills, occupied, enemies_alive, fizzles = _step_kernel(
            self.arch,
            self.subtask,
            self.pos,
            self.health,
            self.cooldown,
            self.alive,
            self.attacked,
            *self._stats,
            self.kind_pursuit,
            self.base_xy,
            float(self.bounds[0]),
            float(self.bounds[1]),
            self.cfg.defense_enemy_mode == "advance",
            self.cfg.occupation_radius,
            actions,
            self.n_agents,
        )
        return StepEvents(
            enemy_damage_net=damage,
            enemy_kills=int(kills),
            occupied_subtask=int(occupied),
            enemies_alive=bool(enemies_alive),
            agent_fizzles=int(fizzles),
        )


def build_observations(sim, out: np.ndarray | None = None) -> np.ndarray:
    arr = sim.arrays()
    n_agents = sim.n_agents
    length = obs_length(n_agents, sim.n_enemies)
    if out is None:
        out = np.empty((n_agents, length), np.float32)
    stats = sim.table.stat_arrays()
    _obs_kernel(
        arr["arch"],
        arr["pos"],
        arr["health"],
        arr["alive"],
        stats["max_health"],
        stats["sight_range"],
        n_agents,
        float(sim.bounds[0]),
        float(sim.bounds[1]),
        out,
    )
    return out


def build_masks(sim, out: np.ndarray | None = None) -> np.ndarray:
    arr = sim.arrays()
    n_agents = sim.n_agents
    if out is None:
        out = np.empty((n_agents, FIXED_ACTIONS + sim.n_enemies), np.bool_)
    stats = sim.table.stat_arrays()
    _mask_kernel(
        arr["arch"],
        arr["pos"],
        arr["health"],
        arr["alive"],
        stats["attack_range"],
        stats["heal_range"],
        stats["heal_amount"],
        n_agents,
        out,
    )
    return out
