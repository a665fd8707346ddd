"""Operator entry point: list tasks, run episodes, validate specs, verify
replays, and serve the HTTP API.

Bulk commands (run, verify-replay) drive the library in-process; `serve`
exposes the same environment contract to external clients over HTTP.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .agents import POLICIES
from .catalog import (
    LayoutError,
    SpecFormatError,
    TaskNotFoundError,
    classify_variant,
    load_catalog,
    load_task_file,
    lookup_task,
    validate_spec,
)
from .config import (
    ConfigError,
    default_unit_table,
    load_engine_config,
    load_unit_table,
)
from .env import CombatEnv, SpecValidationError
from .evaluation import report_csv, report_text, run_episode_batch
from .replay import verify_replay


_SHORT = {"marine": "mrn", "marauder": "mrd", "medivac": "med"}


def _roster_str(roster) -> str:
    from collections import Counter

    from .config import ARCHETYPE_NAMES

    c = Counter(roster)
    return "+".join(f"{c[a]}{_SHORT[a]}" for a in ARCHETYPE_NAMES if c[a])


def _load_spec(task: str | None, spec_file: str | None):
    if (task is None) == (spec_file is None):
        raise click.UsageError("provide exactly one of --task or --spec-file")
    if task is not None:
        return lookup_task(task)
    return load_task_file(spec_file)


@click.group()
@click.version_option(version=__version__, prog_name="ctc")
def main():
    """Composite-task combat simulator and evaluation harness."""


@main.command("list-tasks")
@click.option("--variant", type=click.Choice(["HeA", "HeS", "HoA", "HoS"]), default=None)
def cmd_list_tasks(variant):
    """Tabulate the catalog: name, variant class, subtask count, rosters."""
    catalog = load_catalog()
    rows = []
    for name, spec in catalog.items():
        cls = classify_variant(spec)
        if variant and cls != variant:
            continue
        rosters = " | ".join(_roster_str(s.enemies) for s in spec.subtasks)
        rows.append((name, cls, spec.n_subtasks, _roster_str(spec.total_allies().elements()), rosters))
    width = max((len(r[0]) for r in rows), default=10)
    click.echo(f"{'task':<{width}}  class  N  allies            enemies per subtask")
    for r in rows:
        click.echo(f"{r[0]:<{width}}  {r[1]:<5}  {r[2]}  {r[3]:<16}  {r[4]}")
    click.echo(f"{len(rows)} tasks")


@main.command("validate")
@click.option("--task", default=None, help="catalog task name")
@click.option("--spec-file", type=click.Path(exists=True), default=None)
def cmd_validate(task, spec_file):
    """Check a task spec; exit 1 if violations are found."""
    try:
        spec = _load_spec(task, spec_file)
    except (TaskNotFoundError, SpecFormatError) as e:
        raise click.ClickException(str(e))
    violations = validate_spec(spec)
    if not violations:
        click.echo(f"{spec.name}: valid")
        return
    for v in violations:
        click.echo(f"{spec.name}: [{v.code}] {v.message}")
    sys.exit(1)


@main.command("run")
@click.option("--task", default=None, help="catalog task name")
@click.option("--spec-file", type=click.Path(exists=True), default=None)
@click.option("--policy", type=click.Choice(sorted(POLICIES)), default="oracle")
@click.option("--seeds", default="0", help="comma-separated master seeds")
@click.option("--episodes", default=32, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--engine-config", type=click.Path(exists=True), default=None)
@click.option(
    "--defense-enemy-mode", type=click.Choice(["advance", "stationary"]), default=None
)
@click.option("--workers", default=1, show_default=True, help="parallel episode workers")
@click.option("--units-config", type=click.Path(exists=True), default=None)
def cmd_run(task, spec_file, policy, seeds, episodes, out, engine_config,
            defense_enemy_mode, workers, units_config):
    """Run evaluation episodes; writes one replay per episode plus
    report.txt / report.csv under --out."""
    try:
        spec = _load_spec(task, spec_file)
        cfg = load_engine_config(engine_config, defense_enemy_mode=defense_enemy_mode)
        table = load_unit_table(units_config) if units_config else default_unit_table()
        seed_list = [int(s) for s in seeds.split(",") if s.strip() != ""]
    except (TaskNotFoundError, SpecFormatError, ConfigError, ValueError) as e:
        raise click.ClickException(str(e))
    if not seed_list:
        raise click.ClickException("at least one seed required")

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        CombatEnv(spec, table=table, cfg=cfg)  # fail fast on an invalid spec
    except (SpecValidationError, LayoutError) as e:
        raise click.ClickException(str(e))

    curves = []
    from .evaluation import EvalReport, WinRateCurve, stability_coefficient

    for master in seed_list:
        results = run_episode_batch(
            spec, policy, master, episodes, workers=workers,
            record_replays=True, table=table, cfg=cfg,
        )
        for i, r in enumerate(results):
            name = f"{spec.name}_{policy}_{master}_{i}.replay"
            (out_dir / name).write_text(r.replay_text, encoding="utf-8")
        rate = sum(r.won for r in results) / episodes
        curves.append(WinRateCurve(seed=master, checkpoints=((0, rate),)))
        click.echo(f"seed {master}: win rate {rate:.4f}")

    report = EvalReport(
        task=spec.name,
        policy=policy,
        episodes_per_batch=episodes,
        curves=curves,
        max_test_win_rate=max(w for c in curves for _, w in c.checkpoints),
        stability_v=stability_coefficient(curves),
        m_checkpoints=1,
    )
    (out_dir / "report.txt").write_text(report_text(report), encoding="utf-8")
    (out_dir / "report.csv").write_text(report_csv([report]), encoding="utf-8")
    click.echo(
        f"max_test_win_rate {report.max_test_win_rate:.4f}  stability_v "
        f"{report.stability_v:.6f}  -> {out_dir}"
    )


@main.command("verify-replay")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
def cmd_verify_replay(paths):
    """Re-simulate replays and compare byte-for-byte; exit 1 on mismatch."""
    failures = 0
    for p in paths:
        try:
            result = verify_replay(p)
        except Exception as e:  # corrupt file, bad header, ...
            click.echo(f"{p}: parse error: {e}")
            failures += 1
            continue
        if result.config_warning:
            click.echo(f"{p}: warning: {result.config_warning}")
        status = "ok" if result.ok else f"MISMATCH ({result.message})"
        click.echo(f"{p}: {status}")
        failures += not result.ok
    if failures:
        sys.exit(1)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def cmd_serve(host, port):
    """Serve the environment contract over HTTP."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
