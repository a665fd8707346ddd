"""Composite-task multi-agent combat simulator and evaluation harness."""

from .catalog import (
    CompositeTaskSpec,
    Layout,
    SubtaskSpec,
    classify_variant,
    generate_layout,
    load_catalog,
    lookup_task,
    validate_spec,
)
from .config import ArchetypeTable, EngineConfig, UnitArchetype, default_unit_table
from .engine import Command, ReferenceSimulation, UnitState
from .env import CombatEnv, ContractError, StepOutcome, compute_reward, compute_visibility
from .evaluation import (
    EvalReport,
    WinRateCurve,
    aggregate_report,
    run_test_batch,
    stability_coefficient,
)
from .fastpath import FastSimulation

__version__ = "0.1.0"

__all__ = [
    "ArchetypeTable",
    "CombatEnv",
    "Command",
    "CompositeTaskSpec",
    "ContractError",
    "EngineConfig",
    "EvalReport",
    "FastSimulation",
    "Layout",
    "ReferenceSimulation",
    "StepOutcome",
    "SubtaskSpec",
    "UnitArchetype",
    "UnitState",
    "WinRateCurve",
    "aggregate_report",
    "classify_variant",
    "compute_reward",
    "compute_visibility",
    "default_unit_table",
    "generate_layout",
    "load_catalog",
    "lookup_task",
    "run_test_batch",
    "stability_coefficient",
    "validate_spec",
    "__version__",
]
