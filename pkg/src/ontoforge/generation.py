"""Knowledge-graph generation against a confirmed ontology.

Phase 1 (creation) loops concepts, relationships, and property specs over the
chunked comprehensive text, one completion per (item, chunk) unit. Phase 2
(review) re-scans the text for omissions and repairs connectivity, pausing for
user confirmation whenever fix edges are queued.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    BadParams,
    EmptyName,
    EmptyText,
    InvalidGraph,
    NotFinalized,
    NoValidFixProposed,
    RetriesExhausted,
    StageError,
)
from .extraction import UserDecision
from .llm import ChatClient, CompletionParams, Conversation, DEFAULT_PARAMS
from .model import (
    KgEdge,
    KgNode,
    KnowledgeGraph,
    Ontology,
    connected_components,
    normalize_identifier,
    validate_graph,
)
from .prompts import (
    LineGrammar,
    StepId,
    TemplateSet,
    complete_with_grammar,
    parse_arrow_lines,
    render_arrow_line,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_CHARS = 12000
DEFAULT_OVERLAP = 800

# Sentence-boundary fallback when no paragraph break fits the chunk window.
_SENTENCE_END = re.compile(r"[.!?][\"')\]]*\s")


@dataclass
class TextChunk:
    index: int
    text: str
    char_range: tuple[int, int]

    def to_dict(self) -> dict:
        return {"index": self.index, "text": self.text, "charRange": list(self.char_range)}

    @classmethod
    def from_dict(cls, d: dict) -> TextChunk:
        return cls(d["index"], d["text"], tuple(d["charRange"]))


def chunk_text(t: str, max_chars: int = DEFAULT_MAX_CHARS,
               overlap: int = DEFAULT_OVERLAP) -> list[TextChunk]:
    """Greedy chunking: cut at the last paragraph break inside the window,
    falling back to a sentence break, then to a hard cut. Consecutive chunks
    overlap by exactly `overlap` characters."""
    if max_chars <= 0 or overlap < 0 or overlap >= max_chars:
        raise BadParams(f"need 0 <= overlap < maxChars, got overlap={overlap} maxChars={max_chars}")
    if not t:
        raise EmptyText("no text to chunk")
    chunks: list[TextChunk] = []
    start = 0
    index = 0
    while True:
        hard_end = start + max_chars
        if hard_end >= len(t):
            chunks.append(TextChunk(index, t[start:], (start, len(t))))
            return chunks
        end = hard_end
        para = t.rfind("\n\n", start, end)
        if para != -1 and para + 2 > start + overlap:
            end = para + 2
        else:
            last = None
            for m in _SENTENCE_END.finditer(t, start, end):
                last = m
            if last is not None and last.end() > start + overlap:
                end = last.end()
        chunks.append(TextChunk(index, t[start:end], (start, end)))
        start = end - overlap
        index += 1


class GenerationPhase(Enum):
    CREATE_CONCEPTS = "CreateConcepts"
    CREATE_RELATIONSHIPS = "CreateRelationships"
    CREATE_PROPERTIES = "CreateProperties"
    REVIEW_TEXT = "ReviewText"
    REVIEW_GRAPH = "ReviewGraph"
    FINALIZED = "Finalized"


def _parse_or_none(text: str, grammar: LineGrammar):
    """Generation steps answer NONE when a chunk yields nothing."""
    if text.strip().upper() == "NONE":
        return []
    return parse_arrow_lines(text, grammar)


@dataclass
class StepFailure:
    """A unit that exhausted its corrective rounds; creation continues."""

    phase: str
    unit: str
    detail: str

    def to_dict(self) -> dict:
        return {"phase": self.phase, "unit": self.unit, "detail": self.detail}


@dataclass
class GenerationSession:
    ontology: Ontology
    comprehensive_text: str
    client: ChatClient
    templates: TemplateSet = field(default_factory=TemplateSet)
    params: CompletionParams = field(default_factory=lambda: DEFAULT_PARAMS)
    max_chars: int = DEFAULT_MAX_CHARS
    overlap: int = DEFAULT_OVERLAP
    chunks: list[TextChunk] = field(default_factory=list)
    draft: KnowledgeGraph = field(default_factory=KnowledgeGraph)
    phase: GenerationPhase = GenerationPhase.CREATE_CONCEPTS
    pending_fix_edges: list[KgEdge] = field(default_factory=list)
    connectivity_waived: bool = False
    step_failures: list[StepFailure] = field(default_factory=list)
    call_log: list[dict] = field(default_factory=list)
    fix_feedback: str | None = None
    # (concept name, lowercased instance name) -> node id
    _instances: dict[tuple[str, str], str] = field(default_factory=dict)
    _counters: dict[str, int] = field(default_factory=dict)
    _used_ids: set[str] = field(default_factory=set)
    _edge_keys: set[tuple[str, str, str]] = field(default_factory=set)

    def __post_init__(self):
        if not self.chunks:
            self.chunks = chunk_text(self.comprehensive_text, self.max_chars, self.overlap)

    @property
    def llm_calls(self) -> int:
        return sum(entry["calls"] for entry in self.call_log)

    # --- shared plumbing ---

    def _ask(self, step: StepId, unit: str, context: dict[str, str], grammar: LineGrammar,
             extra_user: str | None = None):
        """One generation unit: fresh conversation, bounded corrective loop.

        Returns parsed lines, or None when the unit exhausted its retries
        (recorded; creation proceeds with partial results).
        """
        conv = Conversation()
        conv.append("system", self.templates.system_preamble)
        conv.append("user", self.templates.prompt(step, context))
        if extra_user:
            conv.append("user", extra_user)
        try:
            parsed = complete_with_grammar(
                self.client, conv, lambda text: _parse_or_none(text, grammar), self.params)
        except RetriesExhausted as exc:
            calls = sum(1 for m in conv.messages if m.role == "assistant")
            self.call_log.append({"step": step.value, "unit": unit, "calls": calls, "failed": True})
            self.step_failures.append(StepFailure(self.phase.value, unit, str(exc)))
            log.warning("unit %s failed after %d rounds", unit, calls)
            return None
        calls = sum(1 for m in conv.messages if m.role == "assistant")
        self.call_log.append({"step": step.value, "unit": unit, "calls": calls, "failed": False})
        return parsed

    def _add_instance(self, concept_name: str, instance_name: str) -> KgNode | None:
        name = instance_name.strip()
        key = (concept_name, name.lower())
        if key in self._instances:
            return None
        ordinal = self._counters.get(concept_name, 0) + 1
        try:
            node_id = normalize_identifier(name, "node-id", ordinal)
            while node_id in self._used_ids:
                ordinal += 1
                node_id = normalize_identifier(name, "node-id", ordinal)
        except EmptyName:
            log.warning("instance %r has no usable identifier characters, skipped", name)
            return None
        self._counters[concept_name] = ordinal
        self._used_ids.add(node_id)
        self._instances[key] = node_id
        node = KgNode(node_id, concept_name, {"name": name})
        self.draft.nodes.append(node)
        return node

    def _resolve(self, concept_name: str, ref: str) -> str | None:
        """Map an instance reference to a node id: exact id, then (concept, name)."""
        ref = ref.strip()
        node = self.draft.node_by_id(ref)
        if node is not None and node.concept == concept_name:
            return node.id
        return self._instances.get((concept_name, ref.lower()))

    def _add_edge(self, relationship: str, source_id: str, target_id: str) -> bool:
        key = (relationship, source_id, target_id)
        if key in self._edge_keys:
            return False
        self._edge_keys.add(key)
        self.draft.edges.append(KgEdge(relationship, source_id, target_id))
        return True

    def _queue_fix(self, relationship: str, source_ref: str, target_ref: str):
        edge = KgEdge(relationship, source_ref.strip(), target_ref.strip())
        if edge.key() not in {e.key() for e in self.pending_fix_edges}:
            self.pending_fix_edges.append(edge)

    @staticmethod
    def _names(values: list[str]) -> str:
        return ", ".join(values) if values else "(none yet)"

    def _instances_of(self, concept_name: str) -> list[str]:
        return [n.properties.get("name", n.id) for n in self.draft.nodes
                if n.concept == concept_name]

    def _relationship_lines(self) -> str:
        return "\n".join(render_arrow_line(r.name, r.source, r.target)
                         for r in self.ontology.relationships)

    def _require_phase(self, expected: GenerationPhase):
        if self.phase != expected:
            raise StageError(f"operation requires phase {expected.value}, session is at {self.phase.value}")

    # --- phase 1: creation ---

    def extract_concept_instances(self, progress=None) -> GenerationSession:
        self._require_phase(GenerationPhase.CREATE_CONCEPTS)
        for concept in self.ontology.concepts:
            for chunk in self.chunks:
                unit = f"concept={concept.name} chunk={chunk.index}"
                if progress:
                    progress("extract-instances", {"concept": concept.name, "chunk": chunk.index})
                parsed = self._ask(StepId.INSTANCE_EXTRACTION, unit, {
                    "chunk_index": str(chunk.index),
                    "chunk": chunk.text,
                    "concept": concept.name,
                    "concept_examples": ", ".join(concept.examples),
                }, LineGrammar.INSTANCE)
                if parsed is None:
                    continue
                for line in parsed:
                    if line.left.strip().lower() != concept.name.strip().lower():
                        log.warning("instance line for %r ignored during %s", line.left, unit)
                        continue
                    self._add_instance(concept.name, line.right)
        self.phase = GenerationPhase.CREATE_RELATIONSHIPS
        return self

    def extract_relationship_instances(self, progress=None) -> GenerationSession:
        self._require_phase(GenerationPhase.CREATE_RELATIONSHIPS)
        for rel in self.ontology.relationships:
            for chunk in self.chunks:
                unit = f"relationship={rel.name} chunk={chunk.index}"
                if progress:
                    progress("extract-relationships", {"relationship": rel.name, "chunk": chunk.index})
                parsed = self._ask(StepId.RELATIONSHIP_EXTRACTION, unit, {
                    "chunk_index": str(chunk.index),
                    "chunk": chunk.text,
                    "relationship": rel.name,
                    "source_concept": rel.source,
                    "target_concept": rel.target,
                    "source_instances": self._names(self._instances_of(rel.source)),
                    "target_instances": self._names(self._instances_of(rel.target)),
                }, LineGrammar.EDGE)
                if parsed is None:
                    continue
                for line in parsed:
                    if line.name.strip().lower() != rel.name.strip().lower():
                        log.warning("edge line named %r ignored during %s", line.name, unit)
                        continue
                    source = self._resolve(rel.source, line.left)
                    target = self._resolve(rel.target, line.right)
                    if source is None or target is None:
                        # Unknown instances become review candidates instead of
                        # silently materializing nodes.
                        self._queue_fix(rel.name, source or line.left, target or line.right)
                        continue
                    self._add_edge(rel.name, source, target)
        self.phase = GenerationPhase.CREATE_PROPERTIES
        return self

    def extract_property_values(self, progress=None) -> GenerationSession:
        self._require_phase(GenerationPhase.CREATE_PROPERTIES)
        for spec in self.ontology.properties:
            key = normalize_identifier(spec.property_name, "property-key")
            for chunk in self.chunks:
                unit = f"property={spec.concept}.{key} chunk={chunk.index}"
                if progress:
                    progress("extract-properties",
                             {"concept": spec.concept, "property": key, "chunk": chunk.index})
                parsed = self._ask(StepId.PROPERTY_EXTRACTION, unit, {
                    "chunk_index": str(chunk.index),
                    "chunk": chunk.text,
                    "property": key,
                    "concept": spec.concept,
                    "instances": self._names(self._instances_of(spec.concept)),
                }, LineGrammar.VALUE)
                if parsed is None:
                    continue
                for line in parsed:
                    node_id = self._resolve(spec.concept, line.left)
                    if node_id is None:
                        log.warning("value for unknown instance %r skipped in %s", line.left, unit)
                        continue
                    node = self.draft.node_by_id(node_id)
                    value = line.right.strip()
                    existing = node.properties.get(key)
                    if existing is None:
                        node.properties[key] = value
                    elif existing != value:
                        log.warning("conflicting %s for %s: kept %r, ignored %r",
                                    key, node_id, existing, value)
        self.phase = GenerationPhase.REVIEW_TEXT
        return self

    # --- phase 2: review ---

    def review_text(self, progress=None) -> GenerationSession:
        self._require_phase(GenerationPhase.REVIEW_TEXT)
        for chunk in self.chunks:
            unit = f"review chunk={chunk.index}"
            if progress:
                progress("review-text", {"chunk": chunk.index})
            parsed = self._ask(StepId.TEXT_REVIEW, unit, {
                "inventory": self._inventory(),
                "relationship_types": self._relationship_lines(),
                "chunk_index": str(chunk.index),
                "chunk": chunk.text,
            }, LineGrammar.EDGE)
            if parsed is None:
                continue
            for line in parsed:
                self._merge_review_line(line, unit)
        self.phase = GenerationPhase.REVIEW_GRAPH
        return self

    def _inventory(self) -> str:
        lines = []
        for concept in self.ontology.concepts:
            lines.append(f"{concept.name}: {self._names(self._instances_of(concept.name))}")
        for edge in self.draft.edges:
            source = self.draft.node_by_id(edge.source_id)
            target = self.draft.node_by_id(edge.target_id)
            lines.append(render_arrow_line(
                edge.relationship,
                source.properties.get("name", source.id),
                target.properties.get("name", target.id)))
        return "\n".join(lines)

    def _merge_review_line(self, line, unit: str):
        rel = self.ontology.find_relationship(line.name)
        if rel is not None:
            source = self._resolve(rel.source, line.left)
            target = self._resolve(rel.target, line.right)
            if source is None or target is None:
                self._queue_fix(rel.name, source or line.left, target or line.right)
            else:
                self._add_edge(rel.name, source, target)
            return
        concept = self.ontology.find_concept(line.left)
        if concept is not None:
            self._add_instance(concept.name, line.right)
            return
        log.warning("review line %r / %r matches no declared type, ignored in %s",
                    line.name, line.left, unit)

    def review_graph(self, progress=None) -> GenerationSession:
        self._require_phase(GenerationPhase.REVIEW_GRAPH)
        if self.pending_fix_edges:
            raise StageError("queued fix edges await a decision before connectivity review")
        components = connected_components(self.draft)
        if len(components) <= 1:
            self.phase = GenerationPhase.FINALIZED
            return self
        primary = max(components, key=len)
        feedback = self.fix_feedback
        self.fix_feedback = None
        for component in components:
            if component is primary:
                continue
            if progress:
                progress("review-graph", {"component": component})
            parsed = self._ask(StepId.GRAPH_REVIEW, f"component={component[0]}", {
                "orphan_nodes": self._describe(component),
                "main_nodes": self._describe(primary),
                "relationship_types": self._relationship_lines(),
            }, LineGrammar.EDGE, extra_user=feedback)
            if parsed is None or not parsed:
                raise NoValidFixProposed(f"no fix proposed for component {component}")
            line = parsed[0]
            rel = self.ontology.find_relationship(line.name)
            if rel is None:
                raise NoValidFixProposed(f"proposed relationship {line.name!r} is not declared")
            source = self._resolve(rel.source, line.left)
            target = self._resolve(rel.target, line.right)
            if source is None or target is None:
                raise NoValidFixProposed(
                    f"proposed edge endpoints {line.left!r} → {line.right!r} do not match "
                    f"instances of {rel.source}/{rel.target}")
            self._queue_fix(rel.name, source, target)
        return self

    def _describe(self, component: list[str]) -> str:
        parts = []
        for node_id in component:
            node = self.draft.node_by_id(node_id)
            parts.append(f"{node_id} ({node.properties.get('name', node_id)})")
        return ", ".join(parts)

    # --- fix-pause decisions ---

    def apply_fix_decision(self, decision: UserDecision) -> GenerationSession:
        """Resolve the queued fix edges. Accept applies all; acceptWithEdits
        applies the listed subset (an empty list waives connectivity);
        rejectWithFeedback discards the queue and re-runs repair later."""
        decision.validate()
        if self.phase != GenerationPhase.REVIEW_GRAPH or not self.pending_fix_edges:
            raise StageError("no fix edges pending")
        if decision.kind == "rejectWithFeedback":
            self.pending_fix_edges = []
            self.fix_feedback = decision.feedback
            return self
        if decision.kind == "accept":
            chosen = list(self.pending_fix_edges)
        else:
            chosen = [KgEdge.from_dict(e) for e in decision.edits]
            pending = {e.key() for e in self.pending_fix_edges}
            for e in chosen:
                if e.key() not in pending:
                    raise BadParams(f"edge {e.key()} is not among the pending fixes")
        self.pending_fix_edges = []
        for edge in chosen:
            self._apply_fix_edge(edge)
        if decision.kind == "acceptWithEdits" and not chosen:
            self.connectivity_waived = True
            self.phase = GenerationPhase.FINALIZED
            return self
        if len(connected_components(self.draft)) <= 1:
            self.phase = GenerationPhase.FINALIZED
        return self

    def _apply_fix_edge(self, edge: KgEdge):
        rel = self.ontology.find_relationship(edge.relationship)
        if rel is None:
            log.warning("pending edge %s has undeclared type, dropped", edge.key())
            return
        source = self._resolve(rel.source, edge.source_id)
        target = self._resolve(rel.target, edge.target_id)
        if source is None or target is None:
            log.warning("pending edge %s still references unknown instances, dropped", edge.key())
            return
        self._add_edge(rel.name, source, target)

    # --- driver and finalize ---

    def run_until_pause(self, progress=None) -> GenerationSession:
        """Advance phases until a fix-edge pause or Finalized.

        Fix candidates queued during creation surface at the connectivity
        pause, after the text review had its chance to add the instances
        they reference.
        """
        steps = {
            GenerationPhase.CREATE_CONCEPTS: self.extract_concept_instances,
            GenerationPhase.CREATE_RELATIONSHIPS: self.extract_relationship_instances,
            GenerationPhase.CREATE_PROPERTIES: self.extract_property_values,
            GenerationPhase.REVIEW_TEXT: self.review_text,
            GenerationPhase.REVIEW_GRAPH: self.review_graph,
        }
        while self.phase != GenerationPhase.FINALIZED:
            if self.phase == GenerationPhase.REVIEW_GRAPH and self.pending_fix_edges:
                return self
            steps[self.phase](progress=progress)
        return self

    def finalize_kg(self) -> KnowledgeGraph:
        if self.phase != GenerationPhase.FINALIZED:
            raise NotFinalized(f"generation still at phase {self.phase.value}")
        report = validate_graph(self.draft, self.ontology)
        if not report.valid:
            raise InvalidGraph(report)
        if not self.connectivity_waived and len(connected_components(self.draft)) > 1:
            raise InvalidGraph(report)
        return self.draft

    # --- persistence ---

    def to_dict(self) -> dict:
        return {
            "ontology": self.ontology.to_dict(),
            "comprehensiveText": self.comprehensive_text,
            "maxChars": self.max_chars,
            "overlap": self.overlap,
            "chunks": [c.to_dict() for c in self.chunks],
            "draftNodes": [n.to_dict() for n in self.draft.nodes],
            "draftEdges": [e.to_dict() for e in self.draft.edges],
            "phase": self.phase.value,
            "pendingFixEdges": [e.to_dict() for e in self.pending_fix_edges],
            "connectivityWaived": self.connectivity_waived,
            "stepFailures": [f.to_dict() for f in self.step_failures],
            "callLog": list(self.call_log),
            "fixFeedback": self.fix_feedback,
            "counters": dict(self._counters),
        }

    @classmethod
    def from_dict(cls, d: dict, client: ChatClient,
                  templates: TemplateSet | None = None,
                  params: CompletionParams = DEFAULT_PARAMS) -> GenerationSession:
        s = cls(
            ontology=Ontology.from_dict(d["ontology"]),
            comprehensive_text=d["comprehensiveText"],
            client=client,
            templates=templates or TemplateSet(),
            params=params,
            max_chars=d["maxChars"],
            overlap=d["overlap"],
            chunks=[TextChunk.from_dict(c) for c in d["chunks"]],
            phase=GenerationPhase(d["phase"]),
        )
        s.draft = KnowledgeGraph(
            nodes=[KgNode.from_dict(n) for n in d["draftNodes"]],
            edges=[KgEdge.from_dict(e) for e in d["draftEdges"]],
        )
        s.pending_fix_edges = [KgEdge.from_dict(e) for e in d["pendingFixEdges"]]
        s.connectivity_waived = d["connectivityWaived"]
        s.step_failures = [StepFailure(**f) for f in d["stepFailures"]]
        s.call_log = list(d["callLog"])
        s.fix_feedback = d.get("fixFeedback")
        s._counters = dict(d["counters"])
        for node in s.draft.nodes:
            s._used_ids.add(node.id)
            s._instances[(node.concept, node.properties.get("name", "").lower())] = node.id
        for edge in s.draft.edges:
            s._edge_keys.add(edge.key())
        return s


def start_generation(ontology: Ontology, comprehensive_text: str, client: ChatClient,
                     templates: TemplateSet | None = None,
                     params: CompletionParams = DEFAULT_PARAMS,
                     max_chars: int = DEFAULT_MAX_CHARS,
                     overlap: int = DEFAULT_OVERLAP) -> GenerationSession:
    if not (comprehensive_text or "").strip():
        raise EmptyText("comprehensive text is empty")
    return GenerationSession(ontology, comprehensive_text, client,
                             templates or TemplateSet(), params,
                             max_chars=max_chars, overlap=overlap)


# Module-level aliases matching the operation names used elsewhere.

def extract_concept_instances(gs: GenerationSession, progress=None) -> GenerationSession:
    return gs.extract_concept_instances(progress)


def extract_relationship_instances(gs: GenerationSession, progress=None) -> GenerationSession:
    return gs.extract_relationship_instances(progress)


def extract_property_values(gs: GenerationSession, progress=None) -> GenerationSession:
    return gs.extract_property_values(progress)


def review_text(gs: GenerationSession, progress=None) -> GenerationSession:
    return gs.review_text(progress)


def review_graph(gs: GenerationSession, progress=None) -> GenerationSession:
    return gs.review_graph(progress)


def finalize_kg(gs: GenerationSession) -> KnowledgeGraph:
    return gs.finalize_kg()
