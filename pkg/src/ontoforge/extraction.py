"""Ontology extraction as a staged state machine.

Concept, relationship, and property proposals each come from one completion
(plus bounded corrective rounds) and pause at a confirmation stage where the
user accepts, accepts with edits, or rejects with feedback. Rejection feedback
goes into the conversation so the next proposal sees it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    BadParams,
    EditValidationFailed,
    EmptyInput,
    InvalidOntology,
    NotFinalized,
    RetriesExhausted,
    StageError,
    StepFailed,
)
from .llm import ChatClient, CompletionParams, Conversation, DEFAULT_PARAMS
from .model import (
    Concept,
    Ontology,
    PropertySpec,
    RelationshipType,
    normalize_identifier,
    validate_ontology,
)
from .prompts import (
    ParsedConceptLine,
    StepId,
    TemplateSet,
    complete_with_grammar,
    parse_concept_lines,
    parse_property_lines,
    parse_relationship_lines,
    render_arrow_line,
    render_concept_line,
)

log = logging.getLogger(__name__)


class ExtractionStage(Enum):
    AWAIT_TARGETED_KNOWLEDGE = "AwaitTargetedKnowledge"
    CONCEPT_PROPOSAL = "ConceptProposal"
    CONCEPT_CONFIRM = "ConceptConfirm"
    RELATIONSHIP_PROPOSAL = "RelationshipProposal"
    RELATIONSHIP_CONFIRM = "RelationshipConfirm"
    PROPERTY_PROPOSAL = "PropertyProposal"
    PROPERTY_CONFIRM = "PropertyConfirm"
    FINALIZED = "Finalized"


_CONFIRM_FOR = {
    ExtractionStage.CONCEPT_PROPOSAL: ExtractionStage.CONCEPT_CONFIRM,
    ExtractionStage.RELATIONSHIP_PROPOSAL: ExtractionStage.RELATIONSHIP_CONFIRM,
    ExtractionStage.PROPERTY_PROPOSAL: ExtractionStage.PROPERTY_CONFIRM,
}
_PROPOSAL_FOR = {v: k for k, v in _CONFIRM_FOR.items()}


@dataclass
class UserDecision:
    kind: str  # accept | acceptWithEdits | rejectWithFeedback
    edits: list | None = None
    feedback: str | None = None

    KINDS = ("accept", "acceptWithEdits", "rejectWithFeedback")

    def validate(self):
        if self.kind not in self.KINDS:
            raise BadParams(f"unknown decision kind {self.kind!r}")
        if (self.edits is not None) != (self.kind == "acceptWithEdits"):
            raise BadParams("edits are required exactly when kind is acceptWithEdits")
        if self.kind == "rejectWithFeedback" and not (self.feedback or "").strip():
            raise BadParams("rejectWithFeedback requires non-empty feedback")
        if self.kind != "rejectWithFeedback" and self.feedback is not None:
            raise BadParams("feedback only accompanies rejectWithFeedback")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.edits is not None:
            d["edits"] = self.edits
        if self.feedback is not None:
            d["feedback"] = self.feedback
        return d

    @classmethod
    def from_dict(cls, d: dict) -> UserDecision:
        if not isinstance(d, dict) or "kind" not in d:
            raise BadParams("decision must be an object with a 'kind' field")
        dec = cls(kind=d["kind"], edits=d.get("edits"), feedback=d.get("feedback"))
        dec.validate()
        return dec


@dataclass
class StepOutcome:
    """What a proposal step produced, plus the question now pending."""

    step: StepId
    proposals: list
    question: str
    corrective_rounds: int


@dataclass
class ExtractionSession:
    targeted_knowledge: str
    client: ChatClient
    templates: TemplateSet = field(default_factory=TemplateSet)
    params: CompletionParams = field(default_factory=lambda: DEFAULT_PARAMS)
    stage: ExtractionStage = ExtractionStage.CONCEPT_PROPOSAL
    conversation: Conversation = field(default_factory=Conversation)
    proposed_concepts: list[Concept] = field(default_factory=list)
    confirmed_concepts: list[Concept] = field(default_factory=list)
    proposed_relationships: list[RelationshipType] = field(default_factory=list)
    confirmed_relationships: list[RelationshipType] = field(default_factory=list)
    proposed_properties: list[PropertySpec] = field(default_factory=list)
    confirmed_properties: list[PropertySpec] = field(default_factory=list)
    predefined: Ontology | None = None
    pending_question: str | None = None

    # --- proposal steps ---

    def advance(self) -> StepOutcome:
        """Run the proposal step for the current stage; pause at its confirm stage."""
        if self.stage == ExtractionStage.CONCEPT_PROPOSAL:
            return self.propose_concepts()
        if self.stage == ExtractionStage.RELATIONSHIP_PROPOSAL:
            return self.propose_relationships()
        if self.stage == ExtractionStage.PROPERTY_PROPOSAL:
            return self.propose_properties()
        raise StageError(f"nothing to advance at stage {self.stage.value}")

    def _complete(self, step: StepId, parse) -> tuple[list, int]:
        # Transport errors and fixture misses propagate; only an exhausted
        # corrective loop becomes a StepFailed for the session layer.
        before = len(self.conversation.messages)
        try:
            parsed = complete_with_grammar(self.client, self.conversation, parse, self.params)
        except RetriesExhausted as exc:
            raise StepFailed(step.value, exc) from exc
        added = self.conversation.messages[before:]
        rounds = sum(1 for m in added if m.role == "assistant") - 1
        return parsed, rounds

    def propose_concepts(self) -> StepOutcome:
        if self.stage != ExtractionStage.CONCEPT_PROPOSAL:
            raise StageError(f"cannot propose concepts at stage {self.stage.value}")
        parsed, rounds = self._complete(StepId.CONCEPT_PROPOSAL, parse_concept_lines)
        concepts: list[Concept] = []
        for line in parsed:
            if any(c.name.strip().lower() == line.category.strip().lower() for c in concepts):
                log.warning("duplicate concept proposal dropped: %s", line.category)
                continue
            concepts.append(Concept(line.category, list(line.examples)))
        self.proposed_concepts = concepts
        self.stage = ExtractionStage.CONCEPT_CONFIRM
        return self._pause(StepId.CONCEPT_CONFIRMATION, concepts, rounds,
                           proposed_concepts="\n".join(
                               render_concept_line(ParsedConceptLine(c.name, c.examples)) for c in concepts))

    def propose_relationships(self) -> StepOutcome:
        if self.stage != ExtractionStage.RELATIONSHIP_PROPOSAL:
            raise StageError(f"cannot propose relationships at stage {self.stage.value}")
        if not self.confirmed_concepts:
            raise StageError("no confirmed concepts to relate")
        prompt = self.templates.prompt(StepId.RELATIONSHIP_PROPOSAL, {
            "confirmed_concepts": "\n".join(f"- {c.name}" for c in self.confirmed_concepts),
        })
        self.conversation.append("user", prompt)
        parsed, rounds = self._complete(StepId.RELATIONSHIP_PROPOSAL, parse_relationship_lines)
        relationships: list[RelationshipType] = []
        names = {c.name.strip().lower(): c.name for c in self.confirmed_concepts}
        for line in parsed:
            source = names.get(line.source.strip().lower())
            target = names.get(line.target.strip().lower())
            if source is None or target is None:
                log.warning("relationship %r dropped: endpoint not a confirmed concept", line.name)
                continue
            if any(r.name.strip().lower() == line.name.strip().lower() for r in relationships):
                log.warning("duplicate relationship proposal dropped: %s", line.name)
                continue
            relationships.append(RelationshipType(line.name, source, target))
        self.proposed_relationships = relationships
        self.stage = ExtractionStage.RELATIONSHIP_CONFIRM
        return self._pause(StepId.RELATIONSHIP_CONFIRMATION, relationships, rounds,
                           proposed_relationships="\n".join(
                               render_arrow_line(r.name, r.source, r.target) for r in relationships))

    def propose_properties(self) -> StepOutcome:
        if self.stage != ExtractionStage.PROPERTY_PROPOSAL:
            raise StageError(f"cannot propose properties at stage {self.stage.value}")
        prompt = self.templates.prompt(StepId.PROPERTY_PROPOSAL, {
            "confirmed_concepts": "\n".join(f"- {c.name}" for c in self.confirmed_concepts),
        })
        self.conversation.append("user", prompt)
        parsed, rounds = self._complete(StepId.PROPERTY_PROPOSAL, parse_property_lines)
        properties: list[PropertySpec] = []
        names = {c.name.strip().lower(): c.name for c in self.confirmed_concepts}
        for line in parsed:
            concept = names.get(line.concept.strip().lower())
            if concept is None:
                log.warning("property %r dropped: concept not confirmed", line.property_name)
                continue
            key = normalize_identifier(line.property_name, "property-key")
            if key in ("id", "name"):
                log.warning("property %r filtered: mandatory key", line.property_name)
                continue
            if any(p.concept == concept
                   and normalize_identifier(p.property_name, "property-key") == key
                   for p in properties):
                log.warning("duplicate property proposal dropped: %s / %s", concept, line.property_name)
                continue
            properties.append(PropertySpec(concept, line.property_name))
        self.proposed_properties = properties
        self.stage = ExtractionStage.PROPERTY_CONFIRM
        return self._pause(StepId.PROPERTY_CONFIRMATION, properties, rounds,
                           proposed_properties="\n".join(
                               render_arrow_line(p.property_name, p.concept, p.property_name)
                               for p in properties))

    def _pause(self, confirm_step: StepId, proposals: list, rounds: int, **slots) -> StepOutcome:
        question = self.templates.prompt(confirm_step, {k: str(v) for k, v in slots.items()})
        self.pending_question = question
        return StepOutcome(confirm_step, proposals, question, rounds)

    # --- confirmation gates ---

    def confirm(self, decision: UserDecision) -> ExtractionSession:
        decision.validate()
        if self.stage not in _PROPOSAL_FOR:
            raise StageError(f"no pending confirmation at stage {self.stage.value}")
        if decision.kind == "rejectWithFeedback":
            self.conversation.append("user", decision.feedback)
            self.stage = _PROPOSAL_FOR[self.stage]
            self.pending_question = None
            return self
        edited = decision.kind == "acceptWithEdits"
        if self.stage == ExtractionStage.CONCEPT_CONFIRM:
            confirmed = (self._concepts_from_edits(decision.edits)
                         if edited else self.proposed_concepts)
            self._check(Ontology(confirmed, [], []), edited)
            self.confirmed_concepts = confirmed
            self.stage = ExtractionStage.RELATIONSHIP_PROPOSAL
        elif self.stage == ExtractionStage.RELATIONSHIP_CONFIRM:
            confirmed = (self._relationships_from_edits(decision.edits)
                         if edited else self.proposed_relationships)
            self._check(Ontology(self.confirmed_concepts, confirmed, []), edited)
            self.confirmed_relationships = confirmed
            self.stage = ExtractionStage.PROPERTY_PROPOSAL
        else:
            confirmed = (self._properties_from_edits(decision.edits)
                         if edited else self.proposed_properties)
            self._check(Ontology(self.confirmed_concepts, self.confirmed_relationships,
                                 confirmed), edited)
            self.confirmed_properties = confirmed
            self.stage = ExtractionStage.FINALIZED
        self.pending_question = None
        return self

    @staticmethod
    def _concepts_from_edits(edits: list) -> list[Concept]:
        try:
            return [Concept(e["name"], list(e.get("examples", [])), e.get("description"))
                    for e in edits]
        except (TypeError, KeyError) as exc:
            raise BadParams(f"malformed concept edit: {exc}") from exc

    @staticmethod
    def _relationships_from_edits(edits: list) -> list[RelationshipType]:
        try:
            return [RelationshipType(e["name"], e["source"], e["target"]) for e in edits]
        except (TypeError, KeyError) as exc:
            raise BadParams(f"malformed relationship edit: {exc}") from exc

    @staticmethod
    def _properties_from_edits(edits: list) -> list[PropertySpec]:
        try:
            return [PropertySpec(e["concept"], e["propertyName"]) for e in edits]
        except (TypeError, KeyError) as exc:
            raise BadParams(f"malformed property edit: {exc}") from exc

    @staticmethod
    def _check(candidate: Ontology, edited: bool):
        # Plain accepts are pre-sanitized at proposal time, so a failure there
        # is an internal inconsistency rather than a user mistake.
        report = validate_ontology(candidate)
        if not report.valid:
            if edited:
                raise EditValidationFailed(report)
            raise InvalidOntology(report)

    # --- finalize ---

    def finalize_ontology(self) -> Ontology:
        if self.stage != ExtractionStage.FINALIZED:
            raise NotFinalized(f"extraction still at stage {self.stage.value}")
        if self.predefined is not None:
            return self.predefined
        ontology = Ontology(self.confirmed_concepts, self.confirmed_relationships,
                            self.confirmed_properties)
        report = validate_ontology(ontology)
        if not report.valid:
            raise InvalidOntology(report)
        return ontology

    # --- persistence ---

    def to_dict(self) -> dict:
        return {
            "targetedKnowledge": self.targeted_knowledge,
            "stage": self.stage.value,
            "conversation": self.conversation.to_list(),
            "proposedConcepts": [c.to_dict() for c in self.proposed_concepts],
            "confirmedConcepts": [c.to_dict() for c in self.confirmed_concepts],
            "proposedRelationships": [r.to_dict() for r in self.proposed_relationships],
            "confirmedRelationships": [r.to_dict() for r in self.confirmed_relationships],
            "proposedProperties": [p.to_dict() for p in self.proposed_properties],
            "confirmedProperties": [p.to_dict() for p in self.confirmed_properties],
            "predefined": self.predefined.to_dict() if self.predefined else None,
            "pendingQuestion": self.pending_question,
        }

    @classmethod
    def from_dict(cls, d: dict, client: ChatClient,
                  templates: TemplateSet | None = None,
                  params: CompletionParams = DEFAULT_PARAMS) -> ExtractionSession:
        s = cls(
            targeted_knowledge=d["targetedKnowledge"],
            client=client,
            templates=templates or TemplateSet(),
            params=params,
            stage=ExtractionStage(d["stage"]),
            conversation=Conversation.from_list(d["conversation"]),
        )
        s.proposed_concepts = [Concept.from_dict(c) for c in d["proposedConcepts"]]
        s.confirmed_concepts = [Concept.from_dict(c) for c in d["confirmedConcepts"]]
        s.proposed_relationships = [RelationshipType.from_dict(r) for r in d["proposedRelationships"]]
        s.confirmed_relationships = [RelationshipType.from_dict(r) for r in d["confirmedRelationships"]]
        s.proposed_properties = [PropertySpec.from_dict(p) for p in d["proposedProperties"]]
        s.confirmed_properties = [PropertySpec.from_dict(p) for p in d["confirmedProperties"]]
        s.predefined = Ontology.from_dict(d["predefined"]) if d.get("predefined") else None
        s.pending_question = d.get("pendingQuestion")
        return s


def start_extraction(targeted_knowledge: str | None,
                     client: ChatClient,
                     templates: TemplateSet | None = None,
                     params: CompletionParams = DEFAULT_PARAMS,
                     predefined: Ontology | None = None) -> ExtractionSession:
    """Open a session from targeted-knowledge text, or skip straight to a
    finalized predefined ontology (which must validate)."""
    templates = templates or TemplateSet()
    if predefined is not None:
        report = validate_ontology(predefined)
        if not report.valid:
            raise InvalidOntology(report)
        session = ExtractionSession(targeted_knowledge or "", client, templates, params,
                                    stage=ExtractionStage.FINALIZED)
        session.predefined = predefined
        session.confirmed_concepts = list(predefined.concepts)
        session.confirmed_relationships = list(predefined.relationships)
        session.confirmed_properties = list(predefined.properties)
        return session
    if not (targeted_knowledge or "").strip():
        raise EmptyInput("targeted knowledge text is empty")
    session = ExtractionSession(targeted_knowledge, client, templates, params)
    session.conversation.append("system", templates.system_preamble)
    session.conversation.append("user", templates.prompt(StepId.CONCEPT_PROPOSAL, {
        "targeted_knowledge": targeted_knowledge,
    }))
    return session
