"""HTTP service: datasets, sessions with durable ledgers, and the three phases.

Sessions persist as JSON-lines append-only logs next to the ingested CSV +
sidecar; restarting the service replays the logs, and the derived per-request
random streams make the replayed noisy state identical to the original.
"""
from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .data import Dataset, GroupByQuery, Schema, question_from_json
from .errors import (
    DomainError,
    DPXplainError,
    InsufficientBudgetError,
    PhaseOrderError,
    QuestionError,
    SchemaError,
)
from .session import ExplainSession

_ERROR_STATUS = (
    (InsufficientBudgetError, 402, "insufficient_budget"),
    (PhaseOrderError, 409, "phase_order"),
    (DomainError, 400, "domain_error"),
    (SchemaError, 400, "schema_error"),
    (QuestionError, 400, "question_error"),
)


class ServiceStore:
    """Filesystem-backed registry of datasets and sessions."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "datasets").mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self.datasets: dict[str, Dataset] = {}
        self.sessions: dict[str, ExplainSession] = {}
        self._session_meta: dict[str, dict] = {}
        # Requests within one session are serialized (single writer per
        # ledger); different sessions proceed concurrently.
        self._locks: dict[str, threading.Lock] = {}
        self._recover()

    # -- datasets --

    def add_dataset(self, csv_text: str, schema_doc: Mapping) -> tuple[str, int]:
        schema = Schema.from_json(schema_doc)
        dataset = Dataset.from_csv(csv_text, schema)
        dataset_id = uuid.uuid4().hex[:12]
        folder = self.root / "datasets"
        (folder / f"{dataset_id}.csv").write_text(csv_text)
        (folder / f"{dataset_id}.schema.json").write_text(json.dumps(schema.to_json()))
        self.datasets[dataset_id] = dataset
        return dataset_id, len(dataset)

    def dataset(self, dataset_id: str) -> Dataset:
        if dataset_id not in self.datasets:
            raise KeyError(dataset_id)
        return self.datasets[dataset_id]

    # -- sessions --

    def _session_log(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.jsonl"

    def create_session(self, dataset_id: str, total_rho: float, seed: int) -> str:
        dataset = self.dataset(dataset_id)
        session_id = uuid.uuid4().hex[:12]
        log_path = self._session_log(session_id)
        header = {
            "op": "create",
            "dataset_id": dataset_id,
            "total_rho": total_rho,
            "seed": seed,
        }
        with log_path.open("a") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
        session = ExplainSession(
            dataset, total_rho, seed, sink=self._sink_for(session_id)
        )
        self.sessions[session_id] = session
        self._session_meta[session_id] = header
        self._locks[session_id] = threading.Lock()
        return session_id

    def _sink_for(self, session_id: str):
        path = self._session_log(session_id)

        def sink(record: dict) -> None:
            with path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

        return sink

    def session(self, session_id: str) -> ExplainSession:
        if session_id not in self.sessions:
            raise KeyError(session_id)
        return self.sessions[session_id]

    def lock(self, session_id: str) -> threading.Lock:
        if session_id not in self._locks:
            raise KeyError(session_id)
        return self._locks[session_id]

    def _recover(self) -> None:
        for csv_path in sorted((self.root / "datasets").glob("*.csv")):
            dataset_id = csv_path.stem
            sidecar = csv_path.parent / f"{dataset_id}.schema.json"
            schema = Schema.from_sidecar(sidecar.read_text())
            self.datasets[dataset_id] = Dataset.from_csv(csv_path.read_text(), schema)
        for log_path in sorted((self.root / "sessions").glob("*.jsonl")):
            session_id = log_path.stem
            records = [json.loads(line) for line in log_path.read_text().splitlines() if line]
            if not records or records[0].get("op") != "create":
                continue
            header = records[0]
            dataset = self.datasets[header["dataset_id"]]
            # Re-execute without a sink, then reattach it, so replay does not
            # duplicate log lines.
            session = ExplainSession(dataset, header["total_rho"], header["seed"])
            for record in records[1:]:
                session.apply_logged(record)
            session._sink = self._sink_for(session_id)
            self.sessions[session_id] = session
            self._session_meta[session_id] = header
            self._locks[session_id] = threading.Lock()


class DatasetBody(BaseModel):
    csv: str
    schema_sidecar: dict


class SessionBody(BaseModel):
    dataset_id: str
    total_rho: float
    seed: int | None = None


class Phase1Body(BaseModel):
    query: dict
    rho_query: float


class Phase2Body(BaseModel):
    question: dict
    gamma: float = 0.95


class Phase3Body(BaseModel):
    k: int = 5
    gamma: float = 0.95
    rho_topk: float = 0.5
    rho_influ: float = 0.5
    rho_rank: float = 1.0
    conjuncts: int = 1
    eta: float = 0.1


def create_app(storage_dir: str | Path) -> FastAPI:
    app = FastAPI(title="dpxplain")
    store = ServiceStore(storage_dir)
    app.state.store = store

    @app.exception_handler(DPXplainError)
    async def handle_domain_errors(request: Request, exc: DPXplainError):
        for klass, status, code in _ERROR_STATUS:
            if isinstance(exc, klass):
                return JSONResponse(
                    status_code=status,
                    content={"code": code, "message": str(exc), "detail": {}},
                )
        return JSONResponse(
            status_code=400,
            content={"code": "bad_request", "message": str(exc), "detail": {}},
        )

    @app.exception_handler(KeyError)
    async def handle_missing(request: Request, exc: KeyError):
        return JSONResponse(
            status_code=404,
            content={
                "code": "not_found",
                "message": f"unknown resource {exc.args[0]!r}",
                "detail": {},
            },
        )

    @app.post("/datasets")
    def create_dataset(body: DatasetBody):
        dataset_id, rows = store.add_dataset(body.csv, body.schema_sidecar)
        return {"dataset_id": dataset_id, "row_count": rows}

    @app.post("/sessions")
    def create_session(body: SessionBody):
        seed = body.seed if body.seed is not None else uuid.uuid4().int % (2**63)
        session_id = store.create_session(body.dataset_id, body.total_rho, seed)
        return {
            "session_id": session_id,
            "dataset_id": body.dataset_id,
            "total_rho": body.total_rho,
            "seed": seed,
        }

    @app.post("/sessions/{session_id}/phase1")
    def phase1(session_id: str, body: Phase1Body):
        session = store.session(session_id)
        with store.lock(session_id):
            release = session.phase1(GroupByQuery.from_json(body.query), body.rho_query)
        return release.to_json()

    @app.post("/sessions/{session_id}/phase2")
    def phase2(session_id: str, body: Phase2Body):
        session = store.session(session_id)
        with store.lock(session_id):
            verdict = session.phase2(question_from_json(body.question), body.gamma)
        return verdict.to_json()

    @app.post("/sessions/{session_id}/phase3")
    def phase3(session_id: str, body: Phase3Body):
        session = store.session(session_id)
        with store.lock(session_id):
            table = session.phase3(
                k=body.k,
                gamma=body.gamma,
                rho_topk=body.rho_topk,
                rho_influ=body.rho_influ,
                rho_rank=body.rho_rank,
                conjuncts=body.conjuncts,
                eta=body.eta,
            )
        return table.to_json()

    @app.get("/sessions/{session_id}/budget")
    def budget(session_id: str):
        return store.session(session_id).budget_view()

    return app
