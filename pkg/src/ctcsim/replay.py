"""Replay log format: line-delimited JSON, bit-exact reconstruction.

Line 1 is a header carrying the task document, seed, and a config hash;
every following line records one step (index, joint action indices, per-unit
[id, x, y, health, alive] rows, reward, outcome flags). Replays are
self-contained: verification re-simulates from the embedded spec + config
and compares regenerated lines byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .catalog import task_from_document, task_to_document
from .config import (
    EngineConfig,
    engine_config_from_document,
    unit_table_from_document,
)
from .env import CombatEnv, StepOutcome

REPLAY_FORMAT = "ctc-replay/1"


class ReplayFormatError(ValueError):
    """Corrupt or unparseable replay file."""


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


class ReplayRecorder:
    """Accumulates one episode's replay lines."""

    def __init__(self, env: CombatEnv):
        self.env = env
        header = {
            "format": REPLAY_FORMAT,
            "task": env.spec.name,
            "seed": env.seed,
            "config_hash": env.config_hash,
            "n_agents": env.n_agents,
            "n_actions": env.n_actions,
            "spec": task_to_document(env.spec),
            "units_config": env.table.to_document(),
            "engine_config": env.cfg.to_document(),
        }
        self.lines = [_dump(header)]

    def record_step(self, actions, outcome: StepOutcome) -> None:
        self.lines.append(
            _dump(
                {
                    "t": self.env.t,
                    "actions": [int(a) for a in actions],
                    "reward": outcome.reward,
                    "terminated": outcome.terminated,
                    "won": outcome.won,
                    "failed_subtask": outcome.failed_subtask,
                    "units": self.env.unit_records(),
                }
            )
        )

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.text(), encoding="utf-8")


def read_replay(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse a replay into (header, step records)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ReplayFormatError(f"cannot read replay: {e}") from e
    if not lines:
        raise ReplayFormatError("empty replay file")
    try:
        header = json.loads(lines[0])
        steps = [json.loads(line) for line in lines[1:] if line]
    except json.JSONDecodeError as e:
        raise ReplayFormatError(f"corrupt replay line: {e}") from e
    if not isinstance(header, dict) or header.get("format") != REPLAY_FORMAT:
        raise ReplayFormatError(f"not a {REPLAY_FORMAT} file")
    return header, steps


@dataclass
class VerifyResult:
    ok: bool
    message: str
    mismatch_step: int | None = None
    config_warning: str | None = None


def verify_replay(path: str | Path, backend: str = "fast") -> VerifyResult:
    """Re-simulate from the header and compare every line byte-for-byte."""
    header, steps = read_replay(path)
    raw_lines = Path(path).read_text(encoding="utf-8").splitlines()

    spec = task_from_document(header["spec"])
    table = unit_table_from_document(header["units_config"])
    cfg = engine_config_from_document(header["engine_config"])
    env = CombatEnv(spec, table=table, cfg=cfg, backend=backend)

    config_warning = None
    current_env = CombatEnv(spec)  # default table/config of this installation
    if current_env.config_hash != header["config_hash"]:
        config_warning = (
            f"replay config hash {header['config_hash']} differs from the current "
            f"default configuration ({current_env.config_hash}); verifying against "
            "the configuration embedded in the header"
        )

    env.reset(header["seed"])
    rec = ReplayRecorder(env)
    if rec.lines[0] != raw_lines[0]:
        return VerifyResult(
            False,
            "header mismatch: file was not produced by this spec/config",
            mismatch_step=0,
            config_warning=config_warning,
        )
    for i, step in enumerate(steps):
        if env.terminated:
            return VerifyResult(
                False,
                f"replay has records after termination (step {step.get('t')})",
                mismatch_step=i + 1,
                config_warning=config_warning,
            )
        _, outcome = env.step(step["actions"])
        rec.lines = rec.lines[:1]
        rec.record_step(step["actions"], outcome)
        if rec.lines[1] != raw_lines[i + 1]:
            return VerifyResult(
                False,
                f"divergence at step {step.get('t')}",
                mismatch_step=i + 1,
                config_warning=config_warning,
            )
    return VerifyResult(True, f"ok: {len(steps)} steps verified", config_warning=config_warning)
