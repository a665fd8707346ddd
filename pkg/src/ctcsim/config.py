"""Unit archetype stats and engine configuration.

All balance numbers live in data files (``data/units.yaml`` ships the
defaults) so they can be tuned without code changes. Archetype order is
fixed: marine, marauder, medivac — observation one-hots and stat arrays
index by that order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

ARCHETYPE_NAMES = ("marine", "marauder", "medivac")
MARINE, MARAUDER, MEDIVAC = 0, 1, 2

ALLY, ENEMY = 0, 1

DEFENSE, PURSUIT = 0, 1
KIND_NAMES = ("defense", "pursuit")


class ConfigError(ValueError):
    """Raised for malformed unit-stat or engine config inputs."""


@dataclass(frozen=True)
class UnitArchetype:
    """Static stats for one unit archetype.

    Exactly one of attack_damage / heal_amount is nonzero; sight_range
    must cover attack_range so engagement decisions never outrange vision.
    """

    name: str
    max_health: float
    attack_damage: float
    heal_amount: float
    attack_range: float
    heal_range: float
    sight_range: float
    move_speed: float
    cooldown_steps: int

    def __post_init__(self) -> None:
        if self.max_health <= 0:
            raise ConfigError(f"{self.name}: max_health must be > 0")
        if self.move_speed <= 0:
            raise ConfigError(f"{self.name}: move_speed must be > 0")
        if self.sight_range < self.attack_range:
            raise ConfigError(f"{self.name}: sight_range must cover attack_range")
        if (self.attack_damage > 0) == (self.heal_amount > 0):
            raise ConfigError(
                f"{self.name}: exactly one of attack_damage/heal_amount must be nonzero"
            )
        if self.cooldown_steps < 0:
            raise ConfigError(f"{self.name}: cooldown_steps must be >= 0")

    @property
    def is_healer(self) -> bool:
        return self.heal_amount > 0


@dataclass(frozen=True)
class ArchetypeTable:
    """The three archetypes plus flat numpy views used by the hot path."""

    archetypes: tuple[UnitArchetype, UnitArchetype, UnitArchetype]

    def __post_init__(self) -> None:
        names = tuple(a.name for a in self.archetypes)
        if names != ARCHETYPE_NAMES:
            raise ConfigError(f"archetype order must be {ARCHETYPE_NAMES}, got {names}")
        a = self.archetypes
        object.__setattr__(
            self,
            "_stat_arrays",
            {
                "max_health": np.array([x.max_health for x in a], dtype=np.float64),
                "attack_damage": np.array([x.attack_damage for x in a], dtype=np.float64),
                "heal_amount": np.array([x.heal_amount for x in a], dtype=np.float64),
                "attack_range": np.array([x.attack_range for x in a], dtype=np.float64),
                "heal_range": np.array([x.heal_range for x in a], dtype=np.float64),
                "sight_range": np.array([x.sight_range for x in a], dtype=np.float64),
                "move_speed": np.array([x.move_speed for x in a], dtype=np.float64),
                "cooldown_steps": np.array([x.cooldown_steps for x in a], dtype=np.int64),
            },
        )

    def __getitem__(self, idx: int) -> UnitArchetype:
        return self.archetypes[idx]

    def by_name(self, name: str) -> UnitArchetype:
        return self.archetypes[ARCHETYPE_NAMES.index(name)]

    def stat_arrays(self) -> dict[str, np.ndarray]:
        """Per-archetype stat vectors (cached; treat as read-only)."""
        return self._stat_arrays

    def to_document(self) -> dict:
        doc = {}
        for a in self.archetypes:
            d = asdict(a)
            d.pop("name")
            doc[a.name] = d
        return doc

    @property
    def max_move_speed(self) -> float:
        return max(a.move_speed for a in self.archetypes)


@dataclass(frozen=True)
class EngineConfig:
    """Tunable simulation rules (everything the tasks vary is a flag)."""

    defense_enemy_mode: str = "advance"  # "advance" | "stationary"
    occupation_radius: float = 1.0
    jitter_radius: float = 1.5
    reward_mode: str = "shaped"  # "shaped" | "sparse"
    kill_bonus: float = 10.0
    win_bonus: float = 200.0
    reward_scale_max: float = 20.0

    def __post_init__(self) -> None:
        if self.defense_enemy_mode not in ("advance", "stationary"):
            raise ConfigError(f"bad defense_enemy_mode {self.defense_enemy_mode!r}")
        if self.reward_mode not in ("shaped", "sparse"):
            raise ConfigError(f"bad reward_mode {self.reward_mode!r}")
        if self.occupation_radius <= 0:
            raise ConfigError("occupation_radius must be > 0")

    def to_document(self) -> dict:
        return asdict(self)


def _default_units_path() -> Path:
    return Path(str(resources.files("ctcsim").joinpath("data/units.yaml")))


def load_unit_table(path: str | Path | None = None) -> ArchetypeTable:
    """Load archetype stats from a YAML file (defaults ship in-package)."""
    p = Path(path) if path is not None else _default_units_path()
    with open(p, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict) or "archetypes" not in doc:
        raise ConfigError(f"{p}: expected a mapping with an 'archetypes' key")
    return unit_table_from_document(doc["archetypes"])


def unit_table_from_document(doc: dict) -> ArchetypeTable:
    missing = [n for n in ARCHETYPE_NAMES if n not in doc]
    if missing:
        raise ConfigError(f"missing archetypes: {missing}")
    archetypes = []
    valid = {f.name for f in fields(UnitArchetype)} - {"name"}
    for name in ARCHETYPE_NAMES:
        entry = dict(doc[name])
        unknown = set(entry) - valid
        if unknown:
            raise ConfigError(f"{name}: unknown stat fields {sorted(unknown)}")
        archetypes.append(UnitArchetype(name=name, **entry))
    return ArchetypeTable(tuple(archetypes))


def engine_config_from_document(doc: dict | None, **overrides) -> EngineConfig:
    merged = dict(doc or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in fields(EngineConfig)}
    unknown = set(merged) - valid
    if unknown:
        raise ConfigError(f"unknown engine config fields {sorted(unknown)}")
    return EngineConfig(**merged)


def load_engine_config(path: str | Path | None = None, **overrides) -> EngineConfig:
    if path is None:
        return engine_config_from_document(None, **overrides)
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f) or {}
    return engine_config_from_document(doc, **overrides)


@lru_cache(maxsize=1)
def default_unit_table() -> ArchetypeTable:
    return load_unit_table(None)


def config_fingerprint(table: ArchetypeTable, cfg: EngineConfig, spec_doc: dict) -> str:
    """Stable hash of everything that shapes an episode, for replay headers."""
    payload = {
        "units": table.to_document(),
        "engine": cfg.to_document(),
        "spec": spec_doc,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def with_defense_mode(cfg: EngineConfig, mode: str | None) -> EngineConfig:
    if mode is None:
        return cfg
    return replace(cfg, defense_enemy_mode=mode)
