"""Analyst sessions: a persistent ledger plus the three-phase state machine.

A session owns the only mutable state in the system (its ledger and phase
state); callers must serialize requests per session. Each request consumes a
random stream derived from (session seed, request sequence number), so
replaying the append-only log reproduces every noisy value bit-for-bit.
"""
from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from typing import Callable, Mapping, Sequence

from .data import Dataset, GroupByQuery, UserQuestion, question_from_json
from .errors import PhaseOrderError
from .explain import ExplanationTable, run_phase3
from .mechanisms import PrivacyLedger, RandomSource
from .release import QueryRelease, answer_query
from .validation import ValidityVerdict, validate_question

DEFAULTS = {
    "rho_query": 0.1,
    "rho_topk": 0.5,
    "rho_influ": 0.5,
    "rho_rank": 1.0,
    "gamma": 0.95,
    "k": 5,
    "conjuncts": 1,
    "eta": 0.1,
}


def canonical_digest(doc) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


class ExplainSession:
    """One analyst's interaction: phase1 -> phase2 -> phase3 against one dataset."""

    def __init__(
        self,
        dataset: Dataset,
        total_rho: float,
        seed: int,
        sink: Callable[[dict], None] | None = None,
    ):
        self.dataset = dataset
        self.ledger = PrivacyLedger(total_rho)
        self.seed = int(seed)
        self._root = RandomSource(self.seed)
        self._seq = 0
        self._sink = sink
        self.release: QueryRelease | None = None
        self.verdict: ValidityVerdict | None = None
        self.question: UserQuestion | None = None
        self.table: ExplanationTable | None = None

    def _request_rng(self) -> RandomSource:
        # Stream for the *next* request; committed only if the request succeeds.
        return self._root.derive(self._seq + 1)

    def _log(self, op: str, rho: float, request: dict, response: dict) -> None:
        if self._sink is None:
            return
        self._sink(
            {
                "seq": self._seq,
                "ts": datetime.now(timezone.utc).isoformat(),
                "op": op,
                "rho": rho,
                "request": request,
                "request_digest": canonical_digest(request),
                "response_digest": canonical_digest(response),
            }
        )

    def phase1(self, query: GroupByQuery, rho_query: float) -> QueryRelease:
        """Release noisy answers for every declared group; charges rho_query."""
        rng = self._request_rng()
        release = answer_query(self.dataset, query, rho_query, self.ledger, rng)
        self._seq += 1
        self.release = release
        # A fresh release invalidates any verdict or table about the old one.
        self.verdict = None
        self.question = None
        self.table = None
        self._log(
            "phase1",
            rho_query,
            {"query": query.to_json(), "rho_query": rho_query},
            release.to_json(),
        )
        return release

    def phase2(self, question: UserQuestion, gamma: float) -> ValidityVerdict:
        """Validate the question against the stored release; charge-free."""
        if self.release is None:
            raise PhaseOrderError("phase 2 requires a phase-1 release")
        question.validate(self.dataset.schema, self.release.query)
        verdict = validate_question(self.release, question, gamma)
        self._seq += 1
        self.verdict = verdict
        self.question = question
        self._log(
            "phase2",
            0.0,
            {"question": question.to_json(), "gamma": gamma},
            verdict.to_json(),
        )
        return verdict

    def phase3(
        self,
        k: int,
        gamma: float,
        rho_topk: float,
        rho_influ: float,
        rho_rank: float,
        conjuncts: int = 1,
        eta: float = 0.1,
    ) -> ExplanationTable:
        """Explain the phase-2 question; charges topk/influ/rank atomically."""
        if self.release is None or self.verdict is None or self.question is None:
            raise PhaseOrderError("phase 3 requires a phase-2 verdict")
        rng = self._request_rng()
        table = run_phase3(
            self.dataset,
            self.release.query,
            self.question,
            self.release,
            k=k,
            gamma=gamma,
            rho_topk=rho_topk,
            rho_influ=rho_influ,
            rho_rank=rho_rank,
            conjuncts=conjuncts,
            eta=eta,
            ledger=self.ledger,
            rng=rng,
        )
        self._seq += 1
        self.table = table
        self._log(
            "phase3",
            rho_topk + rho_influ + rho_rank,
            {
                "k": k,
                "gamma": gamma,
                "rho_topk": rho_topk,
                "rho_influ": rho_influ,
                "rho_rank": rho_rank,
                "conjuncts": conjuncts,
                "eta": eta,
            },
            table.to_json(),
        )
        return table

    def budget_view(self) -> dict:
        return self.ledger.snapshot()

    def apply_logged(self, record: Mapping) -> None:
        """Re-execute one logged mutation (used by crash recovery)."""
        op = record["op"]
        request = record["request"]
        if op == "phase1":
            self.phase1(GroupByQuery.from_json(request["query"]), request["rho_query"])
        elif op == "phase2":
            self.phase2(question_from_json(request["question"]), request["gamma"])
        elif op == "phase3":
            self.phase3(
                k=request["k"],
                gamma=request["gamma"],
                rho_topk=request["rho_topk"],
                rho_influ=request["rho_influ"],
                rho_rank=request["rho_rank"],
                conjuncts=request.get("conjuncts", 1),
                eta=request.get("eta", 0.1),
            )
        else:
            raise ValueError(f"unknown logged operation {op!r}")


def replay(dataset: Dataset, total_rho: float, seed: int, records: Sequence[Mapping]) -> ExplainSession:
    """Rebuild a session by re-running its log; noisy values come out identical."""
    session = ExplainSession(dataset, total_rho, seed)
    for record in records:
        session.apply_logged(record)
    return session
