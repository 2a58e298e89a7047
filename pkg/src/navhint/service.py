"""Session-oriented HTTP service for the navigation study.

Serves tasks under the five experimental conditions, brokers highlights and
suggestions, enforces Check semantics, and persists an append-only event log
(one file per session, fsynced on check/submit) for later analysis.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import evaluation, remedy
from .envmodel import Environment, egocentric_direction, bearing_between, movement_label, path_distance
from .instructions import AnnotatedInstruction
from .metrics import SUCCESS_RADIUS_M
from .perturb import CorpusRecord
from .remedy import Highlight, SuggestionList
from .seeding import derive_seed
from .serialize import EVENTS_SCHEMA, dumps

SCHEMA_VERSION = 1
IMPERFECT_NOTICE = "This instruction was generated automatically and may be imperfect."

EVENT_KINDS = ("move", "check", "open_menu", "apply_suggestion", "revert", "rating", "submit")
SUGGESTION_CONDITIONS = ("model_full", "oracle_full")
HIGHLIGHT_CONDITIONS = ("model_highlights", "model_full", "oracle_highlights", "oracle_full")


class ServiceError(HTTPException):
    pass


@dataclass
class TaskDef:
    task_id: str
    record: CorpusRecord
    instruction: AnnotatedInstruction  # served (possibly corrupted) instruction
    quality_control: bool = False


@dataclass
class TaskState:
    node: str
    heading: float
    ann: AnnotatedInstruction
    checks_used: int = 0
    finalized: bool = False
    history: list[AnnotatedInstruction] = field(default_factory=list)
    served_suggestions: dict[str, SuggestionList] = field(default_factory=dict)


@dataclass
class Session:
    id: str
    condition: str
    task_ids: list[str]
    states: dict[str, TaskState]
    created_at: float
    seq: int = 0
    ratings: dict[str, dict] = field(default_factory=dict)
    submitted: bool = False


def build_task_suite(
    systems: evaluation.TrainedSystems,
    rates,
    seed: int,
    n_tasks: int = 12,
) -> list[TaskDef]:
    """Corrupted test-route tasks plus one fixed clean quality-control task."""
    from . import corpus as corpus_mod

    tasks = []
    test = systems.test
    for idx in range(n_tasks):
        record = test[idx % len(test)]
        corrupted = corpus_mod.corrupt_record(
            record, systems.envs, rates, derive_seed(seed, "task", idx)
        )
        tasks.append(TaskDef(task_id=f"t{idx:03d}", record=record, instruction=corrupted))
    qc_record = test[len(test) // 2]
    tasks.append(
        TaskDef(
            task_id="t-qc",
            record=qc_record,
            instruction=qc_record.instruction,  # clean by construction
            quality_control=True,
        )
    )
    return tasks


class StudyService:
    """Stateless handlers over a shared store; sessions are independent and
    mutations within a session are serialized by sequence number."""

    def __init__(
        self,
        systems: evaluation.TrainedSystems,
        tasks: list[TaskDef],
        log_dir: str | Path,
        session_tasks: int = 7,
        check_budget: int = 6,
        study_seed: int = 0,
    ) -> None:
        self.systems = systems
        self.tasks = {t.task_id: t for t in tasks}
        self.task_order = [t.task_id for t in tasks]
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.session_tasks = session_tasks
        self.check_budget = check_budget
        self.study_seed = study_seed
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    # -- store ------------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.log_dir / f"events-{session_id}.jsonl"

    def _append_event(self, session: Session, task_id: str, kind: str, payload: dict) -> int:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind}")
        session.seq += 1
        record = {
            "session": session.id,
            "task": task_id,
            "kind": kind,
            "payload": payload,
            "seq": session.seq,
        }
        with open(self._log_path(session.id), "a", encoding="utf-8") as handle:
            handle.write(dumps(record) + "\n")
            handle.flush()
            if kind in ("check", "submit"):
                os.fsync(handle.fileno())
        return session.seq

    def _session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ServiceError(status_code=404, detail="unknown session") from None

    def _task_state(self, session: Session, task_id: str) -> tuple[TaskDef, TaskState]:
        if task_id not in session.states:
            raise ServiceError(status_code=404, detail="unknown task")
        return self.tasks[task_id], session.states[task_id]

    def _check_seq(self, session: Session, expected_seq: int | None) -> None:
        if expected_seq is not None and expected_seq != session.seq + 1:
            raise ServiceError(
                status_code=409,
                detail=f"out-of-order sequence: expected {session.seq + 1}, got {expected_seq}",
            )

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, condition: str, seed: int) -> Session:
        if condition not in evaluation.CONDITIONS:
            raise ServiceError(status_code=400, detail=f"unknown condition {condition!r}")
        rng = random.Random(derive_seed(self.study_seed, "session", condition, seed))
        regular = [t for t in self.task_order if not self.tasks[t].quality_control]
        picked = rng.sample(regular, min(self.session_tasks - 1, len(regular)))
        qc = next(t for t in self.task_order if self.tasks[t].quality_control)
        picked.insert(rng.randrange(len(picked) + 1), qc)

        self._counter += 1
        session = Session(
            id=f"s{self._counter:04d}",
            condition=condition,
            task_ids=picked,
            states={},
            created_at=time.time(),
        )
        for task_id in picked:
            task = self.tasks[task_id]
            session.states[task_id] = TaskState(
                node=task.record.route.start_node,
                heading=task.record.route.start_heading,
                ann=task.instruction,
            )
        self.sessions[session.id] = session
        header = {
            "schema": EVENTS_SCHEMA,
            "session": session.id,
            "condition": condition,
            "task_ids": picked,
            "created_at": session.created_at,
        }
        with open(self._log_path(session.id), "w", encoding="utf-8") as handle:
            handle.write(dumps(header) + "\n")
        return session

    # -- views -----------------------------------------------------------------

    def _highlights(self, session: Session, task: TaskDef, state: TaskState) -> list[Highlight]:
        if session.condition in ("model_highlights", "model_full"):
            return remedy.detect_highlights(
                self.systems.detector, self.systems.envs[task.record.env_id], task.record.route, state.ann
            )
        if session.condition in ("oracle_highlights", "oracle_full"):
            return remedy.oracle_highlights(state.ann)
        return []

    def _node_view(self, env: Environment, state: TaskState) -> dict:
        node = env.node(state.node)
        neighbors = []
        for nid in env.neighbors(state.node):
            neighbors.append(
                {"id": nid, "direction": movement_label(env, state.node, nid, state.heading)}
            )
        return {
            "id": node.id,
            "room": node.room_label,
            "objects": [
                [obj.name, egocentric_direction(obj.bearing, state.heading)] for obj in node.objects
            ],
            "neighbors": neighbors,
        }

    def task_payload(self, session: Session, task_id: str) -> dict:
        task, state = self._task_state(session, task_id)
        env = self.systems.envs[task.record.env_id]
        highlights = self._highlights(session, task, state)
        return {
            "schema_version": SCHEMA_VERSION,
            "task_id": task_id,
            "condition": session.condition,
            "notice": IMPERFECT_NOTICE,
            "node": self._node_view(env, state),
            "instruction": {
                "tokens": list(state.ann.tokens),
                "highlights": [
                    {
                        "key": h.key,
                        "span": list(h.span),
                        "confidence": round(h.confidence, 6),
                        "members": [[s.i, s.j, s.kind] for s in h.member_spans],
                        "clause_level": h.clause_level,
                    }
                    for h in highlights
                ],
            },
            "controls": {
                "suggestions_enabled": session.condition in SUGGESTION_CONDITIONS,
                "checks_used": state.checks_used,
                "finalized": state.finalized,
                "can_revert": bool(state.history),
            },
        }

    # -- interactions ----------------------------------------------------------

    def get_suggestions(self, session_id: str, task_id: str, span: str) -> dict:
        session = self._session(session_id)
        task, state = self._task_state(session, task_id)
        if session.condition not in SUGGESTION_CONDITIONS:
            raise ServiceError(status_code=403, detail="suggestions disabled under this condition")
        highlights = {h.key: h for h in self._highlights(session, task, state)}
        if span not in highlights:
            raise ServiceError(status_code=404, detail=f"span {span} is not a served highlight")
        highlight = highlights[span]
        env = self.systems.envs[task.record.env_id]
        if session.condition == "oracle_full":
            ranked = evaluation.oracle_suggestions(state.ann, highlight)
        else:
            ranked = remedy.rank_for_highlight(
                self.systems.detector, self.systems.type_model, env, task.record.route, state.ann, highlight
            )
        state.served_suggestions[span] = ranked
        self._append_event(session, task_id, "open_menu", {"span": span})
        return {
            "schema_version": SCHEMA_VERSION,
            "highlight": span,
            "items": [
                {
                    "candidate": s.candidate,
                    "score": round(s.score, 6),
                    "target": list(s.target) if s.target is not None else None,
                }
                for s in ranked.items
            ],
        }

    def post_move(self, session_id: str, task_id: str, target: str, expected_seq: int | None = None) -> dict:
        session = self._session(session_id)
        task, state = self._task_state(session, task_id)
        self._check_seq(session, expected_seq)
        if state.finalized:
            raise ServiceError(status_code=409, detail="task already finalized")
        env = self.systems.envs[task.record.env_id]
        if target not in env.neighbors(state.node):
            self._append_event(session, task_id, "move", {"target": target, "rejected": True})
            raise ServiceError(status_code=400, detail=f"{target} is not adjacent to {state.node}")
        new_heading = bearing_between(env.node(state.node).position, env.node(target).position)
        state.node = target
        state.heading = new_heading
        self._append_event(
            session, task_id, "move", {"target": target, "heading": new_heading, "rejected": False}
        )
        return self.task_payload(session, task_id)

    def post_check(self, session_id: str, task_id: str, expected_seq: int | None = None) -> dict:
        session = self._session(session_id)
        task, state = self._task_state(session, task_id)
        self._check_seq(session, expected_seq)
        if state.finalized:
            raise ServiceError(status_code=409, detail="task already finalized")
        env = self.systems.envs[task.record.env_id]
        goal = task.record.route.goal
        success = path_distance(env, state.node, goal) <= SUCCESS_RADIUS_M
        state.checks_used += 1
        if success:
            state.finalized = True
        self._append_event(
            session, task_id, "check", {"node": state.node, "success": success}
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "success": success,
            "checks_used": state.checks_used,
            "finalized": state.finalized,
        }

    def post_apply(
        self, session_id: str, task_id: str, span: str, candidate: str, expected_seq: int | None = None
    ) -> dict:
        session = self._session(session_id)
        task, state = self._task_state(session, task_id)
        self._check_seq(session, expected_seq)
        served = state.served_suggestions.get(span)
        if served is None:
            raise ServiceError(status_code=409, detail="no suggestions were served for this span")
        match = next((s for s in served.items if s.candidate == candidate), None)
        if match is None:
            raise ServiceError(status_code=400, detail=f"candidate {candidate!r} was not served")
        highlights = {h.key: h for h in self._highlights(session, task, state)}
        if span not in highlights:
            raise ServiceError(status_code=409, detail="highlight is stale; reload the task")
        try:
            new_ann = remedy.apply_suggestion(state.ann, highlights[span], match)
        except remedy.StaleSpanError as exc:
            raise ServiceError(status_code=409, detail=str(exc)) from exc
        state.history.append(state.ann)
        state.ann = new_ann
        state.served_suggestions.clear()
        self._append_event(
            session, task_id, "apply_suggestion", {"span": span, "candidate": candidate}
        )
        return self.task_payload(session, task_id)

    def post_revert(self, session_id: str, task_id: str, expected_seq: int | None = None) -> dict:
        session = self._session(session_id)
        _, state = self._task_state(session, task_id)
        self._check_seq(session, expected_seq)
        if not state.history:
            raise ServiceError(status_code=409, detail="nothing to revert")
        state.ann = state.history.pop()
        state.served_suggestions.clear()
        self._append_event(session, task_id, "revert", {})
        return self.task_payload(session, task_id)

    def post_rating(self, session_id: str, task_id: str, form: dict, expected_seq: int | None = None) -> dict:
        session = self._session(session_id)
        self._task_state(session, task_id)
        self._check_seq(session, expected_seq)
        for key in ("easy_to_follow", "confident", "mental_demand"):
            value = form.get(key)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ServiceError(status_code=400, detail=f"{key} must be a Likert integer 1-5")
        session.ratings[task_id] = dict(form)
        self._append_event(session, task_id, "rating", dict(form))
        return {"schema_version": SCHEMA_VERSION, "ok": True}

    def post_submit(self, session_id: str, expected_seq: int | None = None) -> dict:
        session = self._session(session_id)
        self._check_seq(session, expected_seq)
        if session.submitted:
            raise ServiceError(status_code=409, detail="session already submitted")
        session.submitted = True
        passed = self.quality_passed(session)
        self._append_event(session, session.task_ids[-1], "submit", {"quality_passed": passed})
        return {"schema_version": SCHEMA_VERSION, "quality_passed": passed}

    def quality_passed(self, session: Session) -> bool:
        for task_id in session.task_ids:
            if self.tasks[task_id].quality_control:
                state = session.states[task_id]
                return state.finalized and state.checks_used <= self.check_budget
        return False

    # -- export -------------------------------------------------------------------

    def export_lines(self) -> list[str]:
        lines = []
        for path in sorted(self.log_dir.glob("events-*.jsonl")):
            lines.extend(path.read_text(encoding="utf-8").splitlines())
        return lines


def episodes_from_events(service: StudyService, lines: list[str]) -> dict[str, dict]:
    """Replay exported logs into per-(session, task) trajectories and tallies."""
    sessions: dict[str, dict] = {}
    for line in lines:
        record = json.loads(line)
        if record.get("schema") == EVENTS_SCHEMA:
            sessions[record["session"]] = {"condition": record["condition"], "tasks": {}}
            continue
        session = sessions[record["session"]]
        task_id = record["task"]
        task = service.tasks[task_id]
        entry = session["tasks"].setdefault(
            task_id,
            {"trajectory": [task.record.route.start_node], "checks": 0, "final": task.record.route.start_node},
        )
        if record["kind"] == "move" and not record["payload"].get("rejected"):
            entry["trajectory"].append(record["payload"]["target"])
            entry["final"] = record["payload"]["target"]
        elif record["kind"] == "check":
            entry["checks"] += 1
    for session in sessions.values():
        for task_id, entry in session["tasks"].items():
            task = service.tasks[task_id]
            env = service.systems.envs[task.record.env_id]
            entry["nav_error_m"] = path_distance(env, entry["final"], task.record.route.goal)
            entry["success"] = entry["nav_error_m"] <= SUCCESS_RADIUS_M
    return sessions


# -- HTTP layer --------------------------------------------------------------------


class CreateSessionBody(BaseModel):
    condition: str
    seed: int = 0


class MoveBody(BaseModel):
    target: str
    expected_seq: int | None = None


class SeqBody(BaseModel):
    expected_seq: int | None = None


class ApplyBody(BaseModel):
    span: str
    candidate: str
    expected_seq: int | None = None


class RatingBody(BaseModel):
    easy_to_follow: int
    confident: int
    mental_demand: int
    expected_seq: int | None = None


def create_app(service: StudyService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="navhint study service")

    @app.post("/session")
    def create_session(body: CreateSessionBody) -> dict:
        session = service.create_session(body.condition, body.seed)
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session.id,
            "condition": session.condition,
            "task_ids": session.task_ids,
        }

    @app.get("/session/{session_id}/task/{task_id}")
    def get_task(session_id: str, task_id: str) -> dict:
        return service.task_payload(service._session(session_id), task_id)

    @app.get("/session/{session_id}/task/{task_id}/suggestions")
    def get_suggestions(session_id: str, task_id: str, span: str) -> dict:
        return service.get_suggestions(session_id, task_id, span)

    @app.post("/session/{session_id}/task/{task_id}/move")
    def post_move(session_id: str, task_id: str, body: MoveBody) -> dict:
        return service.post_move(session_id, task_id, body.target, body.expected_seq)

    @app.post("/session/{session_id}/task/{task_id}/check")
    def post_check(session_id: str, task_id: str, body: SeqBody | None = None) -> dict:
        return service.post_check(session_id, task_id, body.expected_seq if body else None)

    @app.post("/session/{session_id}/task/{task_id}/apply")
    def post_apply(session_id: str, task_id: str, body: ApplyBody) -> dict:
        return service.post_apply(session_id, task_id, body.span, body.candidate, body.expected_seq)

    @app.post("/session/{session_id}/task/{task_id}/revert")
    def post_revert(session_id: str, task_id: str, body: SeqBody | None = None) -> dict:
        return service.post_revert(session_id, task_id, body.expected_seq if body else None)

    @app.post("/session/{session_id}/task/{task_id}/rating")
    def post_rating(session_id: str, task_id: str, body: RatingBody) -> dict:
        form = {
            "easy_to_follow": body.easy_to_follow,
            "confident": body.confident,
            "mental_demand": body.mental_demand,
        }
        return service.post_rating(session_id, task_id, form, body.expected_seq)

    @app.post("/session/{session_id}/submit")
    def post_submit(session_id: str, body: SeqBody | None = None) -> dict:
        return service.post_submit(session_id, body.expected_seq if body else None)

    @app.get("/export")
    def export() -> dict:
        return {"schema_version": SCHEMA_VERSION, "lines": service.export_lines()}

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def build_service(
    config: evaluation.ExperimentConfig | None = None,
    log_dir: str | Path = "study-logs",
    n_tasks: int = 12,
) -> StudyService:
    """Train the systems and assemble a ready-to-serve study service."""
    config = config or evaluation.ExperimentConfig()
    systems = evaluation.train_systems(config)
    tasks = build_task_suite(systems, config.rates, derive_seed(config.seed, "suite"), n_tasks=n_tasks)
    return StudyService(
        systems,
        tasks,
        log_dir,
        check_budget=config.check_budget,
        study_seed=config.seed,
    )
