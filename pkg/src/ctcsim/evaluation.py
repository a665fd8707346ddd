"""Evaluation protocol: greedy test batches, max-over-seeds reporting, and
the across-seed stability coefficient.

The stability coefficient is the mean over recorded checkpoints of the
across-seed variance of the test win rate. Population variance (divide by
N) is the default so a single seed is well-defined at 0; sample variance is
available behind a flag. Checkpoint alignment is strict — no interpolation.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import make_policy
from .catalog import CompositeTaskSpec, lookup_task, task_to_document
from .config import ArchetypeTable, EngineConfig
from .env import CombatEnv
from .replay import ReplayRecorder


class AlignmentError(ValueError):
    """Win-rate curves do not share identical checkpoint step indices."""


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    won: bool
    steps: int
    episode_return: float
    failed_subtask: int | None
    coerced_actions: int
    replay_text: str | None = None


@dataclass(frozen=True)
class WinRateCurve:
    seed: int
    checkpoints: tuple[tuple[int, float], ...]  # (step index, win rate)

    def __post_init__(self):
        steps = [s for s, _ in self.checkpoints]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("checkpoint step indices must be strictly increasing")
        if any(not 0.0 <= w <= 1.0 for _, w in self.checkpoints):
            raise ValueError("win rates must lie in [0, 1]")


@dataclass
class EvalReport:
    task: str
    policy: str
    episodes_per_batch: int
    curves: list[WinRateCurve]
    max_test_win_rate: float
    stability_v: float
    m_checkpoints: int

    def to_document(self) -> dict:
        return {
            "task": self.task,
            "policy": self.policy,
            "episodes_per_batch": self.episodes_per_batch,
            "seeds": [c.seed for c in self.curves],
            "max_test_win_rate": self.max_test_win_rate,
            "stability_v": self.stability_v,
            "m_checkpoints": self.m_checkpoints,
            "curves": {
                str(c.seed): [[s, w] for s, w in c.checkpoints] for c in self.curves
            },
        }


def episode_seed(master_seed: int, episodes: int, index: int) -> int:
    """Per-episode derived seed: master*K + i with K = batch size."""
    return master_seed * episodes + index


def run_episode(
    spec: CompositeTaskSpec,
    policy_name: str,
    seed: int,
    table: ArchetypeTable | None = None,
    cfg: EngineConfig | None = None,
    record_replay: bool = False,
    backend: str = "fast",
) -> EpisodeResult:
    """One greedy episode; deterministic in (spec, policy, seed, config)."""
    env = CombatEnv(spec, table=table, cfg=cfg, backend=backend)
    policy = make_policy(policy_name)
    env.reset(seed)
    policy.reset(env, seed)
    recorder = ReplayRecorder(env) if record_replay else None
    total = 0.0
    outcome = None
    for _ in range(spec.episode_limit):
        actions = policy.act(env)
        _, outcome = env.step(actions)
        total += outcome.reward
        if recorder is not None:
            recorder.record_step(env.last_actions, outcome)
        if outcome.terminated:
            break
    assert outcome is not None and outcome.terminated, "episode must terminate"
    return EpisodeResult(
        seed=seed,
        won=outcome.won,
        steps=outcome.info["steps"],
        episode_return=total,
        failed_subtask=outcome.failed_subtask,
        coerced_actions=outcome.info["coerced_actions"],
        replay_text=recorder.text() if recorder else None,
    )


def _episode_job(args) -> EpisodeResult:
    spec_doc, policy_name, seed, record, backend, units_doc, engine_doc = args
    from .catalog import task_from_document
    from .config import engine_config_from_document, unit_table_from_document

    return run_episode(
        task_from_document(spec_doc),
        policy_name,
        seed,
        table=unit_table_from_document(units_doc) if units_doc else None,
        cfg=engine_config_from_document(engine_doc) if engine_doc else None,
        record_replay=record,
        backend=backend,
    )


def run_episode_batch(
    spec: CompositeTaskSpec,
    policy_name: str,
    master_seed: int,
    episodes: int,
    workers: int = 1,
    record_replays: bool = False,
    backend: str = "fast",
    table: ArchetypeTable | None = None,
    cfg: EngineConfig | None = None,
) -> list[EpisodeResult]:
    """Episodes i = 0..episodes-1 with derived seeds; order-stable results
    regardless of worker count."""
    seeds = [episode_seed(master_seed, episodes, i) for i in range(episodes)]
    if workers <= 1:
        return [
            run_episode(
                spec, policy_name, s, table=table, cfg=cfg,
                record_replay=record_replays, backend=backend,
            )
            for s in seeds
        ]
    doc = task_to_document(spec)
    units_doc = table.to_document() if table is not None else None
    engine_doc = cfg.to_document() if cfg is not None else None
    jobs = [
        (doc, policy_name, s, record_replays, backend, units_doc, engine_doc)
        for s in seeds
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_job, jobs))


def run_test_batch(
    spec: CompositeTaskSpec,
    policy_name: str,
    seed: int,
    episodes: int,
    workers: int = 1,
    backend: str = "fast",
) -> float:
    """Win rate of a greedy test batch: wins / episodes."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    results = run_episode_batch(spec, policy_name, seed, episodes, workers=workers, backend=backend)
    return sum(r.won for r in results) / episodes


def stability_coefficient(curves: list[WinRateCurve], *, population: bool = True) -> float:
    """Mean over checkpoints of the across-seed variance of win rate.

    All curves must share identical checkpoint indices (M >= 1, N >= 1).
    """
    if not curves:
        raise AlignmentError("need at least one curve")
    steps0 = tuple(s for s, _ in curves[0].checkpoints)
    if not steps0:
        raise AlignmentError("curves must have at least one checkpoint")
    for c in curves[1:]:
        if tuple(s for s, _ in c.checkpoints) != steps0:
            raise AlignmentError(
                f"misaligned checkpoints: seed {c.seed} differs from seed {curves[0].seed}"
            )
    matrix = np.array([[w for _, w in c.checkpoints] for c in curves], dtype=np.float64)
    ddof = 0 if population else 1
    if not population and matrix.shape[0] < 2:
        return 0.0
    variances = np.var(matrix, axis=0, ddof=ddof)
    # Identical columns are exactly zero-variance; mean subtraction must not
    # leak float epsilon into the "perfectly consistent runs" case.
    identical = np.all(matrix == matrix[0:1, :], axis=0)
    variances[identical] = 0.0
    return float(variances.mean())


def aggregate_report(
    task_name: str,
    policy_name: str,
    seeds: list[int],
    episodes: int = 32,
    spec: CompositeTaskSpec | None = None,
    workers: int = 1,
    backend: str = "fast",
) -> EvalReport:
    """Max test win rate over seeds × checkpoints plus the stability
    coefficient. Scripted policies have no training axis, so each seed
    contributes a single-checkpoint curve."""
    if not seeds:
        raise ValueError("need at least one seed")
    spec = spec if spec is not None else lookup_task(task_name)
    curves = []
    for s in seeds:
        w = run_test_batch(spec, policy_name, s, episodes, workers=workers, backend=backend)
        curves.append(WinRateCurve(seed=s, checkpoints=((0, w),)))
    max_rate = max(w for c in curves for _, w in c.checkpoints)
    return EvalReport(
        task=spec.name,
        policy=policy_name,
        episodes_per_batch=episodes,
        curves=curves,
        max_test_win_rate=max_rate,
        stability_v=stability_coefficient(curves),
        m_checkpoints=len(curves[0].checkpoints),
    )


def report_text(report: EvalReport) -> str:
    return json.dumps(report.to_document(), indent=2) + "\n"


def report_csv(reports: list[EvalReport]) -> str:
    """Flat table: task, policy, seed, checkpoint, win_rate."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "policy", "seed", "checkpoint", "win_rate"])
    for r in reports:
        for c in r.curves:
            for step, w in c.checkpoints:
                writer.writerow([r.task, r.policy, c.seed, step, w])
    return buf.getvalue()


def write_report(report: EvalReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    txt = out / "report.txt"
    txt.write_text(report_text(report), encoding="utf-8")
    csv_path = out / "report.csv"
    csv_path.write_text(report_csv([report]), encoding="utf-8")
    return txt, csv_path
