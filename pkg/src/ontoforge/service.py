"""Pipeline orchestration: sessions, persistence, and message routing.

A session walks targeted knowledge through ontology extraction, then the
comprehensive text through graph generation, pausing at every confirmation.
State is event-sourced: an append-only log plus a snapshot file per session,
both under the configured data directory. Off-topic chat gets a brief answer
and a verbatim restatement of the pending question.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import cypher
from .errors import (
    BadConfig,
    BadParams,
    FixtureNotFound,
    NotAvailable,
    NotReady,
    OntoforgeError,
    SessionBusy,
    StageError,
    UnknownSession,
)
from .extraction import ExtractionSession, ExtractionStage, UserDecision, start_extraction
from .generation import (
    DEFAULT_MAX_CHARS,
    DEFAULT_OVERLAP,
    GenerationPhase,
    GenerationSession,
    start_generation,
)
from .llm import (
    ChatClient,
    CompletionParams,
    Conversation,
    LiveClient,
    RecordClient,
    ReplayClient,
)
from .model import KnowledgeGraph, Ontology, graph_to_json, ontology_to_json
from .prompts import TemplateSet

log = logging.getLogger(__name__)

AWAIT_TEXT_QUESTION = (
    "The ontology is confirmed. Please provide the comprehensive text to mine "
    "for instances."
)
AWAIT_KNOWLEDGE_QUESTION = (
    "Please provide the targeted knowledge text describing your area of interest."
)

CLASSIFIER_PREAMBLE = (
    "You are a router for an ontology-building assistant. Decide whether the "
    "user's message is about the ontology or knowledge-graph work in progress. "
    "Reply with exactly one word: ONTOPIC or OFFTOPIC."
)
BRIEF_ANSWER_PREAMBLE = (
    "Answer the user's question helpfully in at most three sentences."
)


@dataclass
class ServiceConfig:
    backend: str = "replay"
    fixture: str | None = None
    base_url: str = "https://api.openai.com"
    model: str = "gpt-4o"
    temperature: float = 0.2
    max_tokens: int = 2048
    template_dir: str | None = None
    max_chars: int = DEFAULT_MAX_CHARS
    overlap: int = DEFAULT_OVERLAP
    data_dir: str = "ontoforge-data"
    api_key_env: str = "ONTOFORGE_API_KEY"

    BACKENDS = ("live", "replay", "record")

    def validate(self):
        if self.backend not in self.BACKENDS:
            raise BadConfig(f"unknown backend {self.backend!r}")
        if self.backend == "replay" and not self.fixture:
            raise BadConfig("replay backend needs a fixture path")

    @classmethod
    def from_dict(cls, d: dict) -> ServiceConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise BadConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> ServiceConfig:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise BadConfig(f"unreadable config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def completion_params(self) -> CompletionParams:
        return CompletionParams(model=self.model, temperature=self.temperature,
                                max_tokens=self.max_tokens)


@dataclass
class PipelineSession:
    id: str
    client: ChatClient
    templates: TemplateSet
    params: CompletionParams
    config: ServiceConfig
    extraction: ExtractionSession | None = None
    generation: GenerationSession | None = None
    ontology: Ontology | None = None
    kg: KnowledgeGraph | None = None
    events: list[dict] = field(default_factory=list)
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    cond: threading.Condition = field(default_factory=threading.Condition)

    # --- unified stage ---

    def stage(self) -> str:
        if self.extraction is None:
            return "AwaitTargetedKnowledge"
        if self.extraction.stage != ExtractionStage.FINALIZED:
            return self.extraction.stage.value
        if self.generation is None:
            return "AwaitComprehensiveText"
        if self.generation.phase == GenerationPhase.FINALIZED:
            return "Complete"
        if (self.generation.phase == GenerationPhase.REVIEW_GRAPH
                and self.generation.pending_fix_edges):
            return "FixReview"
        return self.generation.phase.value

    def pending_question(self) -> str | None:
        stage = self.stage()
        if stage == "AwaitTargetedKnowledge":
            return AWAIT_KNOWLEDGE_QUESTION
        if self.extraction is not None and self.extraction.pending_question:
            return self.extraction.pending_question
        if stage == "AwaitComprehensiveText":
            return AWAIT_TEXT_QUESTION
        if stage == "FixReview":
            edges = "\n".join(
                f"- {e.relationship}: {e.source_id} → {e.target_id}"
                for e in self.generation.pending_fix_edges)
            return (
                "The graph needs repair to stay connected. Proposed fix edges:\n"
                f"{edges}\n"
                "Please accept them, accept a subset with edits, or reject with feedback. "
                "Accepting an empty edit list keeps the graph disconnected."
            )
        return None

    def snapshot(self) -> dict:
        artifacts = {
            "ontology": self.ontology is not None,
            "kg": self.kg is not None,
            "cypher": self.kg is not None,
        }
        snap: dict = {
            "id": self.id,
            "stage": self.stage(),
            "pendingQuestion": self.pending_question(),
            "artifacts": artifacts,
            "lastSeq": self.seq,
        }
        if self.extraction is not None:
            snap["extraction"] = {
                "stage": self.extraction.stage.value,
                "proposedConcepts": [c.to_dict() for c in self.extraction.proposed_concepts],
                "confirmedConcepts": [c.to_dict() for c in self.extraction.confirmed_concepts],
                "proposedRelationships": [r.to_dict() for r in self.extraction.proposed_relationships],
                "confirmedRelationships": [r.to_dict() for r in self.extraction.confirmed_relationships],
                "proposedProperties": [p.to_dict() for p in self.extraction.proposed_properties],
                "confirmedProperties": [p.to_dict() for p in self.extraction.confirmed_properties],
            }
        else:
            snap["extraction"] = None
        if self.generation is not None:
            snap["generation"] = {
                "phase": self.generation.phase.value,
                "chunks": len(self.generation.chunks),
                "nodes": len(self.generation.draft.nodes),
                "edges": len(self.generation.draft.edges),
                "pendingFixEdges": [e.to_dict() for e in self.generation.pending_fix_edges],
                "connectivityWaived": self.generation.connectivity_waived,
                "llmCalls": self.generation.llm_calls,
                "stepFailures": [f.to_dict() for f in self.generation.step_failures],
            }
        else:
            snap["generation"] = None
        return snap


class SessionService:
    """Owns all sessions; one mutating call per session at a time."""

    def __init__(self, config: ServiceConfig, client_factory=None):
        config.validate()
        self.config = config
        self.templates = TemplateSet.load(config.template_dir)
        self._client_factory = client_factory or self._default_client
        self._sessions: dict[str, PipelineSession] = {}
        self._registry_lock = threading.Lock()
        self.data_dir = Path(config.data_dir)

    # --- backends ---

    def _default_client(self) -> ChatClient:
        cfg = self.config
        if cfg.backend == "replay":
            if not cfg.fixture or not Path(cfg.fixture).exists():
                raise FixtureNotFound(f"fixture not found: {cfg.fixture}")
            return ReplayClient.from_file(cfg.fixture)
        api_key = os.environ.get(cfg.api_key_env)
        live = LiveClient(cfg.base_url, api_key=api_key)
        if cfg.backend == "record":
            return RecordClient(live)
        return live

    # --- directories and persistence ---

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / "sessions" / session_id

    def _persist_event(self, s: PipelineSession, event: dict):
        d = self._session_dir(s.id)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "events.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _persist_snapshot(self, s: PipelineSession):
        d = self._session_dir(s.id)
        d.mkdir(parents=True, exist_ok=True)
        tmp = d / "snapshot.json.tmp"
        tmp.write_text(json.dumps(s.snapshot(), indent=2, ensure_ascii=False) + "\n",
                       encoding="utf-8")
        os.replace(tmp, d / "snapshot.json")

    def _emit(self, s: PipelineSession, kind: str, payload: dict | None = None):
        with s.cond:
            s.seq += 1
            event = {"seq": s.seq, "ts": time.time(), "kind": kind, "payload": payload or {}}
            s.events.append(event)
            self._persist_event(s, event)
            s.cond.notify_all()

    # --- session lifecycle ---

    def create_session(self) -> dict:
        client = self._client_factory()
        session_id = secrets.token_hex(16)
        s = PipelineSession(session_id, client, self.templates,
                            self.config.completion_params(), self.config)
        with self._registry_lock:
            self._sessions[session_id] = s
        self._emit(s, "sessionCreated", {"id": session_id})
        self._persist_snapshot(s)
        return s.snapshot()

    def _get(self, session_id: str) -> PipelineSession:
        with self._registry_lock:
            s = self._sessions.get(session_id)
        if s is None:
            s = self._rebuild_from_disk(session_id)
        return s

    def get_session(self, session_id: str) -> dict:
        with self._registry_lock:
            s = self._sessions.get(session_id)
        if s is not None:
            return s.snapshot()
        snap_file = self._session_dir(session_id) / "snapshot.json"
        if snap_file.exists():
            return json.loads(snap_file.read_text(encoding="utf-8"))
        raise UnknownSession(f"no session {session_id}")

    def _rebuild_from_disk(self, session_id: str) -> PipelineSession:
        """Replay the persisted input events against a fresh backend."""
        events_file = self._session_dir(session_id) / "events.jsonl"
        if not events_file.exists():
            raise UnknownSession(f"no session {session_id}")
        inputs = []
        with open(events_file, encoding="utf-8") as fh:
            for line in fh:
                event = json.loads(line)
                if event["kind"] in ("userMessage", "advanceRequested"):
                    inputs.append(event)
        rebuilt = self.rebuild_session(session_id, inputs)
        with self._registry_lock:
            self._sessions[session_id] = rebuilt
        return rebuilt

    def rebuild_session(self, session_id: str, input_events: list[dict]) -> PipelineSession:
        """Reconstruct a session by re-applying its input events in order."""
        client = self._client_factory()
        s = PipelineSession(session_id, client, self.templates,
                            self.config.completion_params(), self.config)
        # Replayed events rewrite the log from scratch.
        events_file = self._session_dir(session_id) / "events.jsonl"
        if events_file.exists():
            events_file.unlink()
        self._emit(s, "sessionCreated", {"id": session_id})
        for event in input_events:
            # Inputs that failed originally fail identically on replay; they
            # were persisted before their error surfaced.
            try:
                if event["kind"] == "userMessage":
                    self._handle_message_locked(s, event["payload"]["kind"],
                                                event["payload"]["text"])
                else:
                    self._advance_locked(s)
            except OntoforgeError as exc:
                log.info("replayed input produced %s again: %s", type(exc).__name__, exc)
        self._persist_snapshot(s)
        return s

    # --- mutation entry points ---

    def _mutate(self, session_id: str):
        s = self._get(session_id)
        if not s.lock.acquire(blocking=False):
            raise SessionBusy(f"session {session_id} has a mutation in flight")
        return s

    def handle_message(self, session_id: str, kind: str, text: str) -> dict:
        s = self._mutate(session_id)
        try:
            reply = self._handle_message_locked(s, kind, text)
            self._persist_snapshot(s)
            return {"reply": reply, "session": s.snapshot()}
        finally:
            s.lock.release()

    def advance(self, session_id: str) -> dict:
        s = self._mutate(session_id)
        try:
            self._advance_locked(s)
            self._persist_snapshot(s)
            return s.snapshot()
        finally:
            s.lock.release()

    # --- message routing ---

    def _handle_message_locked(self, s: PipelineSession, kind: str, text: str) -> str:
        if kind not in ("decision", "freeText"):
            raise BadParams(f"message kind must be decision or freeText, got {kind!r}")
        if not (text or "").strip():
            raise BadParams("message text is empty")
        self._emit(s, "userMessage", {"kind": kind, "text": text})
        if kind == "decision":
            try:
                decision = UserDecision.from_dict(json.loads(text))
            except ValueError as exc:
                raise BadParams(f"decision payload is not valid JSON: {exc}") from exc
            reply = self._apply_decision(s, decision)
        else:
            reply = self._apply_free_text(s, text)
        self._emit(s, "reply", {"text": reply, "stage": s.stage()})
        return reply

    def _apply_decision(self, s: PipelineSession, decision: UserDecision) -> str:
        stage = s.stage()
        if stage == "FixReview":
            s.generation.apply_fix_decision(decision)
            self._emit(s, "stage", {"stage": s.stage()})
            if s.generation.phase == GenerationPhase.FINALIZED:
                self._finish_generation(s)
                return "Fix edges resolved; the knowledge graph is complete."
            if decision.kind == "rejectWithFeedback":
                return "Fix proposals discarded. Advance to repropose connectivity fixes."
            return "Fixes applied, but the graph is still disconnected. Advance to continue repair."
        if s.extraction is not None and s.extraction.stage in (
                ExtractionStage.CONCEPT_CONFIRM,
                ExtractionStage.RELATIONSHIP_CONFIRM,
                ExtractionStage.PROPERTY_CONFIRM):
            s.extraction.confirm(decision)
            self._emit(s, "stage", {"stage": s.stage()})
            if s.extraction.stage == ExtractionStage.FINALIZED:
                s.ontology = s.extraction.finalize_ontology()
                self._emit(s, "finalized", {"artifact": "ontology"})
                return AWAIT_TEXT_QUESTION
            if decision.kind == "rejectWithFeedback":
                return "Feedback noted. Advance to get a revised proposal."
            return f"Confirmed. Advance to continue with {s.stage()}."
        raise StageError(f"no decision is pending at stage {stage}")

    def _apply_free_text(self, s: PipelineSession, text: str) -> str:
        stage = s.stage()
        if stage == "AwaitTargetedKnowledge":
            s.extraction = start_extraction(text, s.client, s.templates, s.params)
            outcome = s.extraction.propose_concepts()
            self._emit(s, "stage", {"stage": s.stage()})
            return outcome.question
        if stage == "AwaitComprehensiveText":
            s.generation = start_generation(
                s.ontology, text, s.client, s.templates, s.params,
                max_chars=s.config.max_chars, overlap=s.config.overlap)
            self._emit(s, "stage", {"stage": s.stage()})
            return (f"Received {len(text)} characters in {len(s.generation.chunks)} "
                    f"chunk(s). Advance to build the knowledge graph.")
        return self._redirect(s, text)

    def _redirect(self, s: PipelineSession, text: str) -> str:
        """Classify chat that is not a decision; refine or answer-and-redirect."""
        pending = s.pending_question()
        if pending is None:
            return "The pipeline is complete; the artifacts are ready to export."
        conv = Conversation()
        conv.append("system", CLASSIFIER_PREAMBLE)
        conv.append("user", text)
        verdict = s.client.complete(conv, s.params).content.strip().upper()
        if verdict != "OFFTOPIC":
            # Unparseable verdicts count as on-topic so user guidance is never
            # dropped; at a confirmation stage it becomes rejection feedback.
            if s.extraction is not None and s.extraction.stage in (
                    ExtractionStage.CONCEPT_CONFIRM,
                    ExtractionStage.RELATIONSHIP_CONFIRM,
                    ExtractionStage.PROPERTY_CONFIRM):
                s.extraction.confirm(UserDecision("rejectWithFeedback", feedback=text))
                outcome = s.extraction.advance()
                self._emit(s, "stage", {"stage": s.stage()})
                return outcome.question
            if s.stage() == "FixReview":
                s.generation.apply_fix_decision(
                    UserDecision("rejectWithFeedback", feedback=text))
                self._emit(s, "stage", {"stage": s.stage()})
                return "Feedback noted. Advance to repropose connectivity fixes."
            return pending
        answer_conv = Conversation()
        answer_conv.append("system", BRIEF_ANSWER_PREAMBLE)
        answer_conv.append("user", text)
        answer = s.client.complete(answer_conv, s.params).content.strip()
        return f"{answer}\n\nBack to the task at hand:\n{pending}"

    # --- advancing ---

    def _advance_locked(self, s: PipelineSession):
        self._emit(s, "advanceRequested", {})
        stage = s.stage()
        if stage == "AwaitTargetedKnowledge":
            raise NotReady("provide the targeted knowledge text first")
        if stage == "AwaitComprehensiveText":
            raise NotReady("provide the comprehensive text first")
        if stage == "FixReview":
            raise NotReady("resolve the pending fix edges first")
        if stage == "Complete":
            raise NotReady("the pipeline is already complete")
        if s.extraction.stage != ExtractionStage.FINALIZED:
            outcome = s.extraction.advance()
            self._emit(s, "stage", {"stage": s.stage(),
                                    "correctiveRounds": outcome.corrective_rounds})
            return
        def progress(kind, detail):
            self._emit(s, "progress", {"unit": kind, **detail})

        s.generation.run_until_pause(progress=progress)
        if s.generation.phase == GenerationPhase.FINALIZED:
            self._finish_generation(s)
        else:
            self._emit(s, "fixPause", {
                "pendingFixEdges": [e.to_dict() for e in s.generation.pending_fix_edges]})

    def _finish_generation(self, s: PipelineSession):
        s.kg = s.generation.finalize_kg()
        self._emit(s, "finalized", {"artifact": "kg",
                                    "nodes": len(s.kg.nodes), "edges": len(s.kg.edges)})

    # --- events (long-poll) ---

    def events_after(self, session_id: str, after: int, timeout: float = 25.0) -> list[dict]:
        with self._registry_lock:
            s = self._sessions.get(session_id)
        if s is None:
            events_file = self._session_dir(session_id) / "events.jsonl"
            if not events_file.exists():
                raise UnknownSession(f"no session {session_id}")
            with open(events_file, encoding="utf-8") as fh:
                return [e for e in map(json.loads, fh) if e["seq"] > after]
        deadline = time.monotonic() + timeout
        with s.cond:
            while True:
                fresh = [e for e in s.events if e["seq"] > after]
                if fresh:
                    return fresh
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                s.cond.wait(remaining)

    # --- artifacts ---

    def export_artifacts(self, session_id: str, which: set[str] | None = None) -> dict[str, str]:
        s = self._get(session_id)
        which = which or {"ontology", "kg", "cypher"}
        unknown = which - {"ontology", "kg", "cypher"}
        if unknown:
            raise BadParams(f"unknown artifacts requested: {sorted(unknown)}")
        payloads: dict[str, str] = {}
        if "ontology" in which:
            if s.ontology is None:
                raise NotAvailable("ontology")
            payloads["ontology"] = ontology_to_json(s.ontology)
        if "kg" in which:
            if s.kg is None:
                raise NotAvailable("kg")
            payloads["kg"] = graph_to_json(s.kg)
        if "cypher" in which:
            if s.kg is None:
                raise NotAvailable("cypher")
            if not cypher.verify_roundtrip(s.kg, s.ontology):
                raise StageError("emitted script failed roundtrip verification")
            payloads["cypher"] = cypher.emit_merge_script(s.kg, s.ontology).text
        out_dir = self._session_dir(s.id) / "artifacts"
        out_dir.mkdir(parents=True, exist_ok=True)
        names = {"ontology": "ontology.json", "kg": "kg.json", "cypher": "kg.cypher"}
        for key, payload in payloads.items():
            (out_dir / names[key]).write_text(payload, encoding="utf-8")
        return payloads

    def push_db(self, session_id: str, endpoint: str,
                credentials: tuple[str, str] | None = None,
                database: str = "neo4j") -> dict:
        s = self._get(session_id)
        if s.kg is None:
            raise NotAvailable("cypher")
        if not cypher.verify_roundtrip(s.kg, s.ontology):
            raise StageError("script failed roundtrip verification; not uploading")
        script = cypher.emit_merge_script(s.kg, s.ontology)
        report = cypher.push_to_database(script, endpoint, credentials, database)
        self._emit(s, "dbPush", report.to_dict())
        return report.to_dict()

    def save_fixture(self, session_id: str, path: str | Path):
        s = self._get(session_id)
        if not isinstance(s.client, RecordClient):
            raise BadConfig("session backend is not recording")
        s.client.save(path)


# --- scripted batch driver (used by the CLI and tests) ---

def run_scripted(service: SessionService, targeted_knowledge: str,
                 comprehensive_text: str, decisions: list[dict],
                 max_steps: int = 200) -> tuple[str, dict[str, str]]:
    """Drive one session to completion with a decision script.

    Decisions are consumed in order at every confirmation pause; running out
    while more are needed raises DecisionsExhausted.
    """
    from .errors import DecisionsExhausted

    snapshot = service.create_session()
    session_id = snapshot["id"]
    service.handle_message(session_id, "freeText", targeted_knowledge)
    queue = list(decisions)
    for _ in range(max_steps):
        snapshot = service.get_session(session_id)
        stage = snapshot["stage"]
        if stage == "Complete":
            return session_id, service.export_artifacts(session_id)
        if stage in ("ConceptConfirm", "RelationshipConfirm", "PropertyConfirm", "FixReview"):
            if not queue:
                raise DecisionsExhausted(f"no decision left for stage {stage}")
            service.handle_message(session_id, "decision", json.dumps(queue.pop(0)))
        elif stage == "AwaitComprehensiveText":
            service.handle_message(session_id, "freeText", comprehensive_text)
        else:
            service.advance(session_id)
    raise StageError(f"session did not complete within {max_steps} steps")
