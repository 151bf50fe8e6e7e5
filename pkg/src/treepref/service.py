"""HTTP session service: comparison questions over the wire, one JSON line
per answer on disk.

Each session owns a trace file that is flushed and fsynced before any
response acknowledges the answer, so a crash never loses an acknowledged
comparison.  Restart reloads every session by replaying its trace; because
the loop is deterministic given (config, answers), the replay lands on the
identical pending pair.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .acquisition import AcquisitionConfig, select_next_pair
from .domain import (
    ComparisonPair,
    FeatureSchema,
    Instance,
    PreferenceDataset,
    lhs_sample_pairs,
    schema_from_json,
    schema_to_json,
)
from .loop import RunConfig, recommend
from .posterior import LatentPosterior, NoiseConfig, fit_surrogate
from .tree import TreeConfig, TreeNode, export_explanation

__all__ = ["Session", "SessionStore", "create_app", "run_config_from_json", "run_config_to_json"]

_SESSION_NAMESPACE = uuid.UUID("6ba7b811-9dad-11d1-80b4-00c04fd430c8")


def run_config_from_json(obj: dict | None) -> RunConfig:
    """Build a RunConfig from a partial JSON object; omitted fields default.

    Human sessions have no natural iteration budget, so the default here is
    effectively unbounded rather than the library default.
    """
    obj = obj or {}
    tree = obj.get("tree", {})
    noise = obj.get("noise", {})
    acq = obj.get("acquisition", {})
    try:
        return RunConfig(
            initial_pairs=int(obj.get("initial_pairs", 20)),
            iterations=int(obj.get("iterations", 1_000_000)),
            tree=TreeConfig(
                min_split_score=int(tree.get("min_split_score", 1)),
                min_samples_split=int(tree.get("min_samples_split", 1)),
                max_depth=int(tree.get("max_depth", 50)),
            ),
            noise=NoiseConfig(
                sigma_noise=float(noise.get("sigma_noise", 0.01)),
                sigma_prior=float(noise.get("sigma_prior", 0.02)),
            ),
            acquisition=AcquisitionConfig(
                pool_size=int(acq.get("pool_size", 64)),
                prioritize_within_leaf=bool(acq.get("prioritize_within_leaf", False)),
                seed=int(acq.get("seed", 0)),
            ),
            seed=int(obj.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad config: {exc}") from exc


def run_config_to_json(config: RunConfig) -> dict:
    return {
        "initial_pairs": config.initial_pairs,
        "iterations": config.iterations,
        "tree": {
            "min_split_score": config.tree.min_split_score,
            "min_samples_split": config.tree.min_samples_split,
            "max_depth": config.tree.max_depth,
        },
        "noise": {
            "sigma_noise": config.noise.sigma_noise,
            "sigma_prior": config.noise.sigma_prior,
        },
        "acquisition": {
            "pool_size": config.acquisition.pool_size,
            "prioritize_within_leaf": config.acquisition.prioritize_within_leaf,
            "seed": config.acquisition.seed,
        },
        "seed": config.seed,
    }


class Session:
    """One respondent's comparison session, always reconstructible from disk."""

    def __init__(self, session_id: str, schema: FeatureSchema, config: RunConfig, data_dir: Path) -> None:
        self.session_id = session_id
        self.schema = schema
        self.config = config
        self.data_dir = data_dir
        self.lock = threading.Lock()
        self.dataset = PreferenceDataset(schema)
        self.observed: list[Instance] = []
        self.finished = False
        self.model: tuple[TreeNode, LatentPosterior] | None = None
        self.model_version = 0
        self.pending: tuple[Instance, Instance] | None = None
        self._initial = lhs_sample_pairs(schema, config.initial_pairs, config.seed)
        self._advance()

    # -- persistence ------------------------------------------------------

    @property
    def trace_path(self) -> Path:
        return self.data_dir / f"{self.session_id}.trace.jsonl"

    @property
    def meta_path(self) -> Path:
        return self.data_dir / f"{self.session_id}.meta.json"

    @property
    def finished_path(self) -> Path:
        return self.data_dir / f"{self.session_id}.finished"

    def persist_meta(self, idempotency_key: str | None) -> None:
        payload = {
            "session_id": self.session_id,
            "schema": schema_to_json(self.schema),
            "config": run_config_to_json(self.config),
            "idempotency_key": idempotency_key,
            "created": time.time(),
        }
        with open(self.meta_path, "w") as fh:
            json.dump(payload, fh)
            fh.flush()
            os.fsync(fh.fileno())

    def _persist_answer(self, a: Instance, b: Instance, choice: str) -> None:
        record = {
            "pair": {"a": list(a.values), "b": list(b.values)},
            "choice": choice,
            "timestamp": time.time(),
            "model_version": self.model_version,
        }
        with open(self.trace_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- state machine ----------------------------------------------------

    @property
    def answered(self) -> int:
        return len(self.dataset)

    @property
    def state(self) -> str:
        if self.finished:
            return "finished"
        return "awaiting_answer" if self.pending is not None else "idle"

    @property
    def phase(self) -> str:
        return "warmup" if self.answered < self.config.initial_pairs else "model"

    def _advance(self) -> None:
        """Compute the next pending pair (refitting when past warmup)."""
        n = self.answered
        if n < self.config.initial_pairs:
            self.pending = self._initial[n]
            return
        iteration = n - self.config.initial_pairs
        self.model = fit_surrogate(self.dataset, self.config.tree, self.config.noise)
        self.model_version = iteration + 1
        if iteration >= self.config.iterations:
            self.pending = None
            return
        self.pending = select_next_pair(
            self.model[0], self.model[1], self.schema, self.config.acquisition,
            saturation_pairs=self.config.tree.min_samples_split * 4,
            seed=self.config.acquisition.seed + iteration,
        )

    def apply_answer(self, choice: str, persist: bool = True) -> None:
        assert self.pending is not None
        a, b = self.pending
        winner, loser = (a, b) if choice == "A" else (b, a)
        if persist:
            self._persist_answer(a, b, choice)
        self.dataset.append(ComparisonPair(winner, loser))
        self.observed.extend((a, b))
        self._last_choice = choice
        self._advance()

    def recommendation(self) -> Instance | None:
        if not self.observed:
            return None
        return recommend(self.observed, self.model, None)

    @classmethod
    def load(cls, meta_path: Path, data_dir: Path) -> "Session":
        with open(meta_path) as fh:
            meta = json.load(fh)
        schema = schema_from_json(meta["schema"])
        config = run_config_from_json(meta["config"])
        session = cls(meta["session_id"], schema, config, data_dir)
        if session.trace_path.exists():
            for line_no, line in enumerate(session.trace_path.read_text().splitlines(), start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                expected = session.pending
                if expected is None:
                    raise ValueError(f"{session.trace_path.name}:{line_no}: answer beyond session budget")
                session.apply_answer(record["choice"], persist=False)
        if session.finished_path.exists():
            session.finished = True
        return session


class SessionStore:
    """In-memory registry of sessions backed by a data directory."""

    def __init__(self, data_dir: str | Path) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.by_key: dict[str, str] = {}
        self._create_lock = threading.Lock()
        for meta_path in sorted(self.data_dir.glob("*.meta.json")):
            session = Session.load(meta_path, self.data_dir)
            self.sessions[session.session_id] = session
            with open(meta_path) as fh:
                key = json.load(fh).get("idempotency_key")
            if key:
                self.by_key[key] = session.session_id

    def create(self, schema: FeatureSchema, config: RunConfig, idempotency_key: str | None) -> tuple[Session, bool]:
        with self._create_lock:
            if idempotency_key and idempotency_key in self.by_key:
                return self.sessions[self.by_key[idempotency_key]], False
            if idempotency_key:
                session_id = str(uuid.uuid5(_SESSION_NAMESPACE, idempotency_key))
            else:
                session_id = str(uuid.uuid4())
            session = Session(session_id, schema, config, self.data_dir)
            session.persist_meta(idempotency_key)
            self.sessions[session_id] = session
            if idempotency_key:
                self.by_key[idempotency_key] = session_id
            return session, True

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

class CreateSessionRequest(BaseModel):
    schema_: dict = Field(alias="schema")
    config: dict | None = None
    idempotency_key: str | None = None

    model_config = {"populate_by_name": True}


class AnswerRequest(BaseModel):
    choice: str
    answered_count: int | None = None


def _instance_json(instance: Instance | None) -> list | None:
    return None if instance is None else list(instance.values)


def _pending_json(session: Session) -> dict | None:
    if session.pending is None:
        return None
    a, b = session.pending
    return {"a": _instance_json(a), "b": _instance_json(b)}


def _status(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "state": session.state,
        "phase": session.phase,
        "answered": session.answered,
        "initial_pairs": session.config.initial_pairs,
        "model_version": session.model_version,
        "pending": _pending_json(session),
    }


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    """Build the service; ``data_dir`` defaults to $TREEPREF_DATA_DIR."""
    if data_dir is None:
        data_dir = os.environ.get("TREEPREF_DATA_DIR", "./treepref-sessions")
    store = SessionStore(data_dir)
    app = FastAPI(title="treepref session service")
    app.state.store = store

    def fetch(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}") from None

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict:
        try:
            schema = schema_from_json(request.schema_)
            config = run_config_from_json(request.config)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        session, _created = store.create(schema, config, request.idempotency_key)
        return {**_status(session), "schema": schema_to_json(session.schema)}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        session = fetch(session_id)
        return {**_status(session), "schema": schema_to_json(session.schema)}

    @app.get("/sessions/{session_id}/pending")
    def get_pending(session_id: str) -> dict:
        return _status(fetch(session_id))

    @app.post("/sessions/{session_id}/answer")
    def submit_answer(session_id: str, request: AnswerRequest) -> dict:
        session = fetch(session_id)
        if request.choice not in ("A", "B"):
            raise HTTPException(status_code=400, detail=f"choice must be 'A' or 'B', got {request.choice!r}")
        with session.lock:
            if session.finished:
                raise HTTPException(status_code=409, detail="session is finished")
            if (
                request.answered_count is not None
                and request.answered_count == session.answered - 1
                and getattr(session, "_last_choice", None) == request.choice
            ):
                # duplicate delivery of the previous answer: idempotent replay
                return _status(session)
            if request.answered_count is not None and request.answered_count != session.answered:
                raise HTTPException(
                    status_code=409,
                    detail=f"answered_count {request.answered_count} does not match server state {session.answered}",
                )
            if session.pending is None:
                raise HTTPException(status_code=409, detail="no pending pair to answer")
            session.apply_answer(request.choice)
            return _status(session)

    @app.get("/sessions/{session_id}/model")
    def get_model(session_id: str) -> dict:
        session = fetch(session_id)
        with session.lock:
            if session.model is None:
                return {
                    "model_version": 0,
                    "fitted": False,
                    "explanation": None,
                    "recommendation": None,
                    "recommendation_stats": None,
                }
            tree, posterior = session.model
            best = session.recommendation()
            stats = None
            if best is not None:
                from .acquisition import predict

                mean, var, leaf = predict(tree, posterior, best)
                stats = {"leaf": leaf, "mean": mean, "std": float(var**0.5)}
            return {
                "model_version": session.model_version,
                "fitted": True,
                "explanation": export_explanation(tree, posterior, session.schema),
                "recommendation": _instance_json(best),
                "recommendation_stats": stats,
            }

    @app.post("/sessions/{session_id}/finish")
    def finish_session(session_id: str) -> dict:
        session = fetch(session_id)
        with session.lock:
            if not session.finished:
                session.finished_path.touch()
                session.finished = True
            return {
                "session_id": session.session_id,
                "state": session.state,
                "answered": session.answered,
                "model_version": session.model_version,
                "recommendation": _instance_json(session.recommendation()),
            }

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str) -> dict:
        session = fetch(session_id)
        records = []
        if session.trace_path.exists():
            for line in session.trace_path.read_text().splitlines():
                if line.strip():
                    records.append(json.loads(line))
        return {"session_id": session.session_id, "records": records}

    frontend_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend_dist.is_dir():  # serve the UI build when present
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
