"""HTTP service exposing the environment contract: task catalog, spec
validation, episodic sessions (reset/step/masks), and one-shot action-
sequence replays for parity checking.

Sessions are single-caller handles: created by the reset factory, destroyed
on DELETE; use-after-close is a 404 and never touches simulator state.
"""

from __future__ import annotations

import threading
import uuid
from typing import Any

import psutil
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .catalog import (
    TaskNotFoundError,
    classify_variant,
    load_catalog,
    lookup_task,
    task_from_document,
    task_to_document,
    validate_spec,
)
from .config import engine_config_from_document
from .env import CombatEnv, ContractError, SpecValidationError

app = FastAPI(title="ctcsim", version=__version__)


class TaskRow(BaseModel):
    name: str
    variant: str
    n_subtasks: int
    n_agents: int
    n_enemies: int
    episode_limit: int


class TaskDetail(BaseModel):
    name: str
    variant: str
    n_agents: int
    n_enemies: int
    n_actions: int
    obs_size: int
    state_size: int
    episode_limit: int
    document: dict


class ValidateRequest(BaseModel):
    spec: dict


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[dict[str, str]]


class CreateSessionRequest(BaseModel):
    task: str | None = None
    spec: dict | None = None
    seed: int = 0
    engine_config: dict | None = None


class SessionInfo(BaseModel):
    session_id: str
    task: str
    seed: int
    n_agents: int
    n_actions: int
    obs_size: int
    state_size: int
    config_hash: str
    observations: list[list[float]]
    state: list[float]
    masks: list[list[bool]]


class StepRequest(BaseModel):
    actions: list[int]


class StepResponse(BaseModel):
    observations: list[list[float]]
    state: list[float]
    masks: list[list[bool]]
    reward: float
    terminated: bool
    won: bool
    failed_subtask: int | None
    info: dict[str, Any]
    effective_actions: list[int]


class MasksResponse(BaseModel):
    masks: list[list[bool]]
    terminated: bool


class ReplayRequest(BaseModel):
    task: str | None = None
    spec: dict | None = None
    seed: int = 0
    actions: list[list[int]] = Field(default_factory=list)
    engine_config: dict | None = None


class ReplayResponse(BaseModel):
    rewards: list[float]
    terminated: list[bool]
    won: list[bool]
    failed_subtask: int | None
    steps: int


class StatsResponse(BaseModel):
    open_sessions: int
    rss_bytes: int
    version: str


class _Session:
    def __init__(self, env: CombatEnv):
        self.env = env
        self.lock = threading.Lock()


_sessions: dict[str, _Session] = {}
_registry_lock = threading.Lock()


def _build_env(task: str | None, spec_doc: dict | None, engine_doc: dict | None) -> CombatEnv:
    if (task is None) == (spec_doc is None):
        raise HTTPException(422, "provide exactly one of 'task' or 'spec'")
    try:
        spec = lookup_task(task) if task is not None else task_from_document(spec_doc)
        cfg = engine_config_from_document(engine_doc) if engine_doc else None
        return CombatEnv(spec, cfg=cfg)
    except TaskNotFoundError as e:
        raise HTTPException(404, str(e))
    except (SpecValidationError, ValueError) as e:
        raise HTTPException(422, str(e))


def _get_session(session_id: str) -> _Session:
    with _registry_lock:
        session = _sessions.get(session_id)
    if session is None:
        raise HTTPException(404, f"unknown session {session_id!r}")
    return session


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/stats", response_model=StatsResponse)
def stats() -> StatsResponse:
    with _registry_lock:
        n = len(_sessions)
    rss = psutil.Process().memory_info().rss
    return StatsResponse(open_sessions=n, rss_bytes=rss, version=__version__)


@app.get("/tasks", response_model=list[TaskRow])
def list_tasks(variant: str | None = None) -> list[TaskRow]:
    rows = []
    for name, spec in load_catalog().items():
        cls = classify_variant(spec)
        if variant and cls != variant:
            continue
        rows.append(
            TaskRow(
                name=name,
                variant=cls,
                n_subtasks=spec.n_subtasks,
                n_agents=spec.n_agents,
                n_enemies=spec.n_enemies,
                episode_limit=spec.episode_limit,
            )
        )
    return rows


@app.get("/tasks/{name}", response_model=TaskDetail)
def task_detail(name: str) -> TaskDetail:
    try:
        spec = lookup_task(name)
    except TaskNotFoundError as e:
        raise HTTPException(404, str(e))
    env = CombatEnv(spec)
    return TaskDetail(
        name=spec.name,
        variant=classify_variant(spec),
        n_agents=env.n_agents,
        n_enemies=env.n_enemies,
        n_actions=env.n_actions,
        obs_size=env.obs_size,
        state_size=env.state_size,
        episode_limit=spec.episode_limit,
        document=task_to_document(spec),
    )


@app.post("/tasks/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    try:
        spec = task_from_document(req.spec)
    except ValueError as e:
        raise HTTPException(422, f"unparseable spec: {e}")
    violations = validate_spec(spec)
    return ValidateResponse(
        valid=not violations,
        violations=[{"code": v.code, "message": v.message} for v in violations],
    )


@app.post("/sessions", response_model=SessionInfo)
def create_session(req: CreateSessionRequest) -> SessionInfo:
    env = _build_env(req.task, req.spec, req.engine_config)
    obs, state = env.reset(req.seed)
    session_id = uuid.uuid4().hex[:12]
    with _registry_lock:
        _sessions[session_id] = _Session(env)
    return SessionInfo(
        session_id=session_id,
        task=env.spec.name,
        seed=req.seed,
        n_agents=env.n_agents,
        n_actions=env.n_actions,
        obs_size=env.obs_size,
        state_size=env.state_size,
        config_hash=env.config_hash,
        observations=obs.tolist(),
        state=state.tolist(),
        masks=env.availability_masks().tolist(),
    )


@app.post("/sessions/{session_id}/step", response_model=StepResponse)
def step_session(session_id: str, req: StepRequest) -> StepResponse:
    session = _get_session(session_id)
    with session.lock:
        env = session.env
        if len(req.actions) != env.n_agents:
            raise HTTPException(
                422, f"expected {env.n_agents} actions, got {len(req.actions)}"
            )
        try:
            obs, outcome = env.step(req.actions)
        except ContractError as e:
            raise HTTPException(409, str(e))
        return StepResponse(
            observations=obs.tolist(),
            state=env.state().tolist(),
            masks=env.availability_masks().tolist(),
            reward=outcome.reward,
            terminated=outcome.terminated,
            won=outcome.won,
            failed_subtask=outcome.failed_subtask,
            info=outcome.info,
            effective_actions=[int(a) for a in env.last_actions],
        )


@app.get("/sessions/{session_id}/masks", response_model=MasksResponse)
def session_masks(session_id: str) -> MasksResponse:
    session = _get_session(session_id)
    with session.lock:
        return MasksResponse(
            masks=session.env.availability_masks().tolist(),
            terminated=session.env.terminated,
        )


@app.delete("/sessions/{session_id}")
def close_session(session_id: str) -> dict:
    with _registry_lock:
        if session_id not in _sessions:
            raise HTTPException(404, f"unknown session {session_id!r}")
        del _sessions[session_id]
    return {"closed": session_id}


@app.post("/episodes/replay", response_model=ReplayResponse)
def replay_actions(req: ReplayRequest) -> ReplayResponse:
    """Re-run an action sequence server-side and return the outcome stream
    (the canonical reference for client-side parity checks)."""
    env = _build_env(req.task, req.spec, req.engine_config)
    env.reset(req.seed)
    rewards: list[float] = []
    terminated: list[bool] = []
    won: list[bool] = []
    failed = None
    for joint in req.actions:
        if env.terminated:
            raise HTTPException(409, "actions continue past termination")
        if len(joint) != env.n_agents:
            raise HTTPException(422, f"expected {env.n_agents} actions per step")
        _, outcome = env.step(joint)
        rewards.append(outcome.reward)
        terminated.append(outcome.terminated)
        won.append(outcome.won)
        failed = outcome.failed_subtask
    return ReplayResponse(
        rewards=rewards,
        terminated=terminated,
        won=won,
        failed_subtask=failed,
        steps=len(rewards),
    )
