"""Episodic environment: reset/step lifecycle, observations, action masks,
reward shaping, and composite success/failure termination.

Termination checks run in a fixed order after each resolved step:
(1) any enemy within the occupation radius of its subtask base fails that
subtask (and the episode); (2) all enemies dead wins; (3) hitting the
episode limit fails with no failed_subtask index (timeout).

Invalid joint actions (mask violations and out-of-range indices) are
coerced to stop (noop for dead agents) and counted, matching common
environment contracts; resolution-time fizzles are counted separately
(see engine module docs).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import fastpath
from .catalog import (
    CompositeTaskSpec,
    Layout,
    RESET_TOLERATED_VIOLATIONS,
    generate_layout,
    resolve_ally_assignment,
    task_to_document,
    validate_spec,
)
from .config import (
    ALLY,
    ENEMY,
    ArchetypeTable,
    EngineConfig,
    config_fingerprint,
    default_unit_table,
)
from .engine import ACTION_NOOP, ACTION_STOP, ReferenceSimulation, UnitState

logger = logging.getLogger(__name__)


class ContractError(RuntimeError):
    """Environment used outside its lifecycle contract."""


class SpecValidationError(ValueError):
    """Spec failed validation at environment construction."""


def compute_visibility(observer: UnitState, entity: UnitState) -> bool:
    """True iff the entity is alive and within the observer's sight range.

    Dead observers see nothing (total function; the callers only ever ask
    for living observers).
    """
    if not observer.alive:
        return False
    return entity.alive and observer.distance_to(entity) <= observer.archetype.sight_range


def compute_reward(
    damage_net: float, kills: int, won: bool, cfg: EngineConfig, normalizer: float
) -> float:
    """Shaped team reward: (net enemy damage + kill bonus x kills + win
    bonus) / normalizer; the sparse mode pays the win bonus only. Failure
    terminals contribute nothing extra."""
    if cfg.reward_mode == "sparse":
        raw = cfg.win_bonus if won else 0.0
    else:
        raw = damage_net + cfg.kill_bonus * kills + (cfg.win_bonus if won else 0.0)
    return raw / normalizer


@dataclass
class StepOutcome:
    reward: float
    terminated: bool
    won: bool
    failed_subtask: int | None
    info: dict[str, Any] = field(default_factory=dict)


class CombatEnv:
    """One composite-task episode at a time; single-caller per instance.

    Independent instances share nothing mutable and may run in parallel.
    Returned observation/state arrays are freshly allocated each call.
    """

    def __init__(
        self,
        spec: CompositeTaskSpec,
        table: ArchetypeTable | None = None,
        cfg: EngineConfig | None = None,
        backend: str = "fast",
    ):
        self.spec = spec
        self.table = table or default_unit_table()
        self.cfg = cfg or EngineConfig()
        if backend not in ("fast", "reference"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        hard = [
            v
            for v in validate_spec(spec, self.table)
            if v.code not in RESET_TOLERATED_VIOLATIONS
        ]
        if hard:
            raise SpecValidationError(
                f"{spec.name}: " + "; ".join(f"[{v.code}] {v.message}" for v in hard)
            )
        self.n_agents = spec.n_agents
        self.n_enemies = spec.n_enemies
        self.n_actions = fastpath.FIXED_ACTIONS + self.n_enemies
        self.obs_size = fastpath.obs_length(self.n_agents, self.n_enemies)
        self.state_size = 7 * (self.n_agents + self.n_enemies)
        self.kinds = [s.kind for s in spec.subtasks]
        self.squad_of_agent = [
            s_idx
            for s_idx, roster in enumerate(resolve_ally_assignment(spec))
            for _ in roster
        ]
        self.config_hash = config_fingerprint(self.table, self.cfg, task_to_document(spec))
        self._sim = None
        self._t = 0
        self._terminated = False
        self._seed: int | None = None
        self.layout: Layout | None = None
        total_hp = sum(self.table.by_name(a).max_health for a in spec.total_enemies().elements())
        self.reward_normalizer = (
            total_hp + self.cfg.kill_bonus * self.n_enemies + self.cfg.win_bonus
        ) / self.cfg.reward_scale_max
        self._info: dict[str, Any] = {}

    # -- lifecycle ----------------------------------------------------------

    def reset(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Instantiate the world from (spec, seed); returns (obs, state)."""
        layout = generate_layout(self.spec, seed, self.cfg)
        return self.reset_from_layout(layout, seed=seed)

    def reset_from_layout(self, layout: Layout, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        units = []
        for i, sp in enumerate(layout.spawns):
            arch = self.table.by_name(sp.archetype)
            units.append(
                UnitState(
                    unit_id=i,
                    archetype=arch,
                    allegiance=sp.allegiance,
                    subtask_index=sp.subtask_index,
                    x=sp.x,
                    y=sp.y,
                    health=arch.max_health,
                )
            )
        sim_cls = fastpath.FastSimulation if self.backend == "fast" else ReferenceSimulation
        self._sim = sim_cls(
            units,
            list(layout.bases),
            self.kinds,
            self.spec.map_bounds,
            self.table,
            self.cfg,
        )
        stats = self.table.stat_arrays()
        self._obs_stats = (stats["max_health"], stats["sight_range"])
        self._mask_stats = (stats["attack_range"], stats["heal_range"], stats["heal_amount"])
        self._arange = np.arange(self.n_agents)
        self.layout = layout
        self._seed = seed
        self._t = 0
        self._terminated = False
        self._mask_step = -1
        self._mask_cache = None
        self._info = {
            "steps": 0,
            "kills": 0,
            "damage_dealt": 0.0,
            "coerced_actions": 0,
            "fizzled_actions": 0,
        }
        return self.observations(), self.state()

    def step(self, actions) -> tuple[np.ndarray, StepOutcome]:
        if self._sim is None:
            raise ContractError("step before reset")
        if self._terminated:
            raise ContractError("step after termination")
        acts = np.asarray(actions, dtype=np.int64)
        if acts.shape != (self.n_agents,):
            raise ValueError(f"expected {self.n_agents} actions, got shape {acts.shape}")
        masks = self.availability_masks()

        if self.backend == "fast":
            sim = self._sim
            effective = np.empty(self.n_agents, np.int64)
            obs = np.empty((self.n_agents, self.obs_size), np.float32)
            next_masks = np.empty((self.n_agents, self.n_actions), np.bool_)
            damage, kills, occupied, enemies_alive, fizzles, coerced = (
                fastpath._env_step_kernel(
                    sim.arch, sim.subtask, sim.pos, sim.health, sim.cooldown,
                    sim.alive, sim.attacked, *sim._stats, sim.kind_pursuit,
                    sim.base_xy, float(self.spec.map_bounds[0]),
                    float(self.spec.map_bounds[1]),
                    self.cfg.defense_enemy_mode == "advance",
                    self.cfg.occupation_radius, acts, masks, effective,
                    self.n_agents, obs, next_masks,
                )
            )
            self._last_actions = effective
            self._t += 1
            self._mask_cache = next_masks
            self._mask_step = self._t
            if coerced:
                self._info["coerced_actions"] += int(coerced)
                logger.debug("coerced %d invalid actions at t=%d", coerced, self._t - 1)
        else:
            valid = masks[self._arange, np.clip(acts, 0, self.n_actions - 1)]
            valid &= (acts >= 0) & (acts < self.n_actions)
            if not valid.all():
                bad = np.flatnonzero(~valid)
                alive = self._sim.arrays()["alive"][: self.n_agents]
                acts = acts.copy()
                acts[bad] = np.where(alive[bad], ACTION_STOP, ACTION_NOOP)
                self._info["coerced_actions"] += int(bad.size)
                logger.debug(
                    "coerced invalid actions for agents %s at t=%d", bad.tolist(), self._t
                )
            self._last_actions = acts
            events = self._sim.step(acts)
            self._t += 1
            obs = None
            damage = events.enemy_damage_net
            kills = events.enemy_kills
            occupied = events.occupied_subtask
            enemies_alive = events.enemies_alive
            fizzles = events.agent_fizzles

        won = False
        failed: int | None = None
        terminated = False
        if occupied >= 0:
            terminated = True
            failed = int(occupied)
        elif not enemies_alive:
            terminated = True
            won = True
        elif self._t >= self.spec.episode_limit:
            terminated = True
        self._terminated = terminated

        reward = compute_reward(damage, int(kills), won, self.cfg, self.reward_normalizer)

        info = self._info
        info["steps"] = self._t
        info["kills"] += int(kills)
        info["damage_dealt"] += max(0.0, damage)
        info["fizzled_actions"] += int(fizzles)
        outcome = StepOutcome(
            reward=reward,
            terminated=terminated,
            won=won,
            failed_subtask=failed,
            info=dict(self._info),
        )
        if obs is None:
            obs = self.observations()
        return obs, outcome

    # -- views --------------------------------------------------------------

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def last_actions(self) -> np.ndarray:
        """Effective (post-coercion) joint action of the latest step."""
        return self._last_actions

    @property
    def t(self) -> int:
        return self._t

    @property
    def seed(self) -> int | None:
        return self._seed

    def observations(self) -> np.ndarray:
        s = self._sim.arrays()
        out = np.empty((self.n_agents, self.obs_size), np.float32)
        fastpath._obs_kernel(
            s["arch"], s["pos"], s["health"], s["alive"], *self._obs_stats,
            self.n_agents, float(self.spec.map_bounds[0]), float(self.spec.map_bounds[1]),
            out,
        )
        return out

    def availability_masks(self) -> np.ndarray:
        # Masks are pure in the step state; cache per step since policies
        # and the pre-step coercion check both ask for them.
        if self._mask_step != self._t:
            s = self._sim.arrays()
            out = np.empty((self.n_agents, self.n_actions), np.bool_)
            fastpath._mask_kernel(
                s["arch"], s["pos"], s["health"], s["alive"], *self._mask_stats,
                self.n_agents, out,
            )
            self._mask_cache = out
            self._mask_step = self._t
        return self._mask_cache

    def available_actions(self, agent_id: int) -> np.ndarray:
        return self.availability_masks()[agent_id]

    def state(self) -> np.ndarray:
        """Centralized-critic view: all unit features, no visibility mask."""
        arr = self._sim.arrays()
        stats = self.table.stat_arrays()
        n = self.n_agents + self.n_enemies
        out = np.zeros((n, 7), np.float32)
        out[:, 0] = arr["alive"]
        out[:, 1] = arr["health"] / stats["max_health"][arr["arch"]]
        out[:, 2] = arr["pos"][:, 0] / self.spec.map_bounds[0]
        out[:, 3] = arr["pos"][:, 1] / self.spec.map_bounds[1]
        out[np.arange(n), 4 + arr["arch"]] = 1.0
        return out.reshape(-1)

    def unit_records(self) -> list[list]:
        """Per-unit [id, x, y, health, alive] rows for replay lines."""
        arr = self._sim.arrays()
        return [
            [
                i,
                float(arr["pos"][i, 0]),
                float(arr["pos"][i, 1]),
                float(arr["health"][i]),
                int(arr["alive"][i]),
            ]
            for i in range(self.n_agents + self.n_enemies)
        ]

    def sim_arrays(self) -> dict[str, np.ndarray]:
        """Read-only view of simulation state (for scripted policies)."""
        return self._sim.arrays()
