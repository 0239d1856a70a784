import pytest

from ontoforge.errors import (
    BadParams,
    EditValidationFailed,
    EmptyInput,
    FixtureMiss,
    InvalidOntology,
    NotFinalized,
    StageError,
    StepFailed,
)
from ontoforge.extraction import (
    ExtractionStage,
    UserDecision,
    start_extraction,
)
from ontoforge.llm import Fixture, ReplayClient, ScriptedClient
from ontoforge.model import Concept, Ontology, PropertySpec, RelationshipType

TK = "Machines are in states; states have activities."

CONCEPTS = """\
*Equipment System*: [Cluster Tool, Track]
*Equipment States*: [Productive State, Scheduled Downtime State]
"""
RELATIONSHIPS = "*Has State*: [Equipment System → Equipment States]\n"
PROPERTIES = "*brief explanation*: [Equipment States → brief explanation]\n"


def accept() -> UserDecision:
    return UserDecision("accept")


def walk_to(stage, responses=None):
    """Drive a session to the requested stage with default accepts."""
    client = ScriptedClient(responses or [CONCEPTS, RELATIONSHIPS, PROPERTIES])
    session = start_extraction(TK, client)
    order = [
        ExtractionStage.CONCEPT_PROPOSAL, ExtractionStage.CONCEPT_CONFIRM,
        ExtractionStage.RELATIONSHIP_PROPOSAL, ExtractionStage.RELATIONSHIP_CONFIRM,
        ExtractionStage.PROPERTY_PROPOSAL, ExtractionStage.PROPERTY_CONFIRM,
        ExtractionStage.FINALIZED,
    ]
    while session.stage != stage:
        if session.stage.name.endswith("PROPOSAL"):
            session.advance()
        else:
            session.confirm(accept())
        assert order.index(session.stage) <= order.index(stage)
    return session


class TestStartExtraction:
    def test_seeds_conversation(self):
        session = start_extraction(TK, ScriptedClient([]))
        assert session.stage == ExtractionStage.CONCEPT_PROPOSAL
        assert session.conversation.messages[0].role == "system"
        assert TK in session.conversation.messages[1].content

    @pytest.mark.parametrize("bad", ["", "   \n\t"])
    def test_blank_input_rejected(self, bad):
        with pytest.raises(EmptyInput):
            start_extraction(bad, ScriptedClient([]))

    def test_predefined_skips_llm(self):
        ontology = Ontology(
            [Concept("A", ["x", "y"]), Concept("B", ["u", "v"])],
            [RelationshipType("Links", "A", "B")],
            [PropertySpec("A", "note")],
        )
        client = ScriptedClient([])
        session = start_extraction(None, client, predefined=ontology)
        assert session.stage == ExtractionStage.FINALIZED
        assert session.finalize_ontology().to_dict() == ontology.to_dict()
        assert client.calls == []

    def test_predefined_must_validate(self):
        broken = Ontology([Concept("A", ["x", "y"]), Concept("a", ["u", "v"])], [], [])
        with pytest.raises(InvalidOntology):
            start_extraction(None, ScriptedClient([]), predefined=broken)


class TestConceptProposal:
    def test_proposes_and_pauses(self):
        session = start_extraction(TK, ScriptedClient([CONCEPTS]))
        outcome = session.advance()
        assert session.stage == ExtractionStage.CONCEPT_CONFIRM
        assert [c.name for c in session.proposed_concepts] == [
            "Equipment System", "Equipment States"]
        assert outcome.corrective_rounds == 0
        assert session.pending_question == outcome.question
        assert "Equipment System" in outcome.question

    def test_case_insensitive_dedupe_keeps_first(self):
        doubled = CONCEPTS + "*equipment system*: [Copy One, Copy Two]\n"
        session = start_extraction(TK, ScriptedClient([doubled]))
        session.advance()
        names = [c.name for c in session.proposed_concepts]
        assert names == ["Equipment System", "Equipment States"]

    def test_corrective_round_counted(self):
        session = start_extraction(TK, ScriptedClient(["free prose", CONCEPTS]))
        outcome = session.advance()
        assert outcome.corrective_rounds == 1
        assert len(session.proposed_concepts) == 2

    def test_exhaustion_becomes_step_failed(self):
        session = start_extraction(TK, ScriptedClient(["bad", "bad", "bad"]))
        with pytest.raises(StepFailed) as err:
            session.advance()
        assert err.value.step == "concept-proposal"

    def test_fixture_miss_propagates(self):
        session = start_extraction(TK, ReplayClient(Fixture([])))
        with pytest.raises(FixtureMiss):
            session.advance()

    def test_advance_rejected_at_confirm_stage(self):
        session = walk_to(ExtractionStage.CONCEPT_CONFIRM)
        with pytest.raises(StageError):
            session.advance()


class TestRelationshipProposal:
    def test_endpoints_canonicalized(self):
        loose = "*Has State*: [equipment SYSTEM → equipment states]\n"
        session = walk_to(ExtractionStage.RELATIONSHIP_PROPOSAL,
                          [CONCEPTS, loose, PROPERTIES])
        session.advance()
        rel = session.proposed_relationships[0]
        assert (rel.source, rel.target) == ("Equipment System", "Equipment States")

    def test_unknown_endpoint_dropped(self):
        mixed = RELATIONSHIPS + "*Has Ghost*: [Equipment System → Phantom Zone]\n"
        session = walk_to(ExtractionStage.RELATIONSHIP_PROPOSAL,
                          [CONCEPTS, mixed, PROPERTIES])
        session.advance()
        assert [r.name for r in session.proposed_relationships] == ["Has State"]

    def test_duplicate_name_dropped(self):
        doubled = RELATIONSHIPS + "*has state*: [Equipment States → Equipment System]\n"
        session = walk_to(ExtractionStage.RELATIONSHIP_PROPOSAL,
                          [CONCEPTS, doubled, PROPERTIES])
        session.advance()
        assert len(session.proposed_relationships) == 1


class TestPropertyProposal:
    def test_reserved_keys_filtered(self):
        noisy = ("*name*: [Equipment System → Name]\n"
                 "*id*: [Equipment System → ID]\n" + PROPERTIES)
        session = walk_to(ExtractionStage.PROPERTY_PROPOSAL,
                          [CONCEPTS, RELATIONSHIPS, noisy])
        session.advance()
        assert [p.property_name for p in session.proposed_properties] == ["brief explanation"]

    def test_unknown_concept_dropped(self):
        noisy = "*note*: [Phantom Zone → note]\n" + PROPERTIES
        session = walk_to(ExtractionStage.PROPERTY_PROPOSAL,
                          [CONCEPTS, RELATIONSHIPS, noisy])
        session.advance()
        assert [p.concept for p in session.proposed_properties] == ["Equipment States"]

    def test_duplicate_key_dropped(self):
        doubled = PROPERTIES + "*Brief Explanation*: [Equipment States → Brief Explanation]\n"
        session = walk_to(ExtractionStage.PROPERTY_PROPOSAL,
                          [CONCEPTS, RELATIONSHIPS, doubled])
        session.advance()
        assert len(session.proposed_properties) == 1


class TestConfirm:
    def test_accept_advances_without_proposing(self):
        session = walk_to(ExtractionStage.CONCEPT_CONFIRM)
        session.confirm(accept())
        assert session.stage == ExtractionStage.RELATIONSHIP_PROPOSAL
        assert session.confirmed_concepts == session.proposed_concepts
        assert session.pending_question is None

    def test_reject_returns_to_proposal_with_feedback(self):
        second = "*Machine*: [Etcher, Stepper]\n"
        session = start_extraction(TK, ScriptedClient([CONCEPTS, second]))
        session.advance()
        session.confirm(UserDecision("rejectWithFeedback", feedback="Too generic, use Machine."))
        assert session.stage == ExtractionStage.CONCEPT_PROPOSAL
        assert session.conversation.messages[-1].role == "user"
        assert "Too generic" in session.conversation.messages[-1].content
        session.advance()
        assert [c.name for c in session.proposed_concepts] == ["Machine"]

    def test_accept_with_edits_replaces_proposals(self):
        session = walk_to(ExtractionStage.CONCEPT_CONFIRM)
        edits = [
            {"name": "Machine", "examples": ["Etcher", "Stepper"]},
            {"name": "State", "examples": ["Up", "Down"]},
        ]
        session.confirm(UserDecision("acceptWithEdits", edits=edits))
        assert [c.name for c in session.confirmed_concepts] == ["Machine", "State"]

    def test_bad_edits_fail_validation(self):
        session = walk_to(ExtractionStage.CONCEPT_CONFIRM)
        dup = [{"name": "Machine", "examples": ["a", "b"]},
               {"name": "machine", "examples": ["c", "d"]}]
        with pytest.raises(EditValidationFailed) as err:
            session.confirm(UserDecision("acceptWithEdits", edits=dup))
        assert any(v.code == "DUP_CONCEPT" for v in err.value.report.violations)
        # session stays at the confirm gate for another try
        assert session.stage == ExtractionStage.CONCEPT_CONFIRM

    def test_malformed_edit_payload(self):
        session = walk_to(ExtractionStage.CONCEPT_CONFIRM)
        with pytest.raises(BadParams):
            session.confirm(UserDecision("acceptWithEdits", edits=[{"examples": []}]))

    def test_relationship_edit_must_reference_concepts(self):
        session = walk_to(ExtractionStage.RELATIONSHIP_CONFIRM)
        ghost = [{"name": "Has Ghost", "source": "Equipment System", "target": "Phantom"}]
        with pytest.raises(EditValidationFailed):
            session.confirm(UserDecision("acceptWithEdits", edits=ghost))

    def test_confirm_without_pending_gate(self):
        session = start_extraction(TK, ScriptedClient([CONCEPTS]))
        with pytest.raises(StageError):
            session.confirm(accept())


class TestFinalize:
    def test_full_walk(self):
        session = walk_to(ExtractionStage.FINALIZED)
        ontology = session.finalize_ontology()
        assert [c.name for c in ontology.concepts] == ["Equipment System", "Equipment States"]
        assert ontology.relationships[0].name == "Has State"
        assert ontology.properties[0].property_name == "brief explanation"

    def test_not_finalized_guard(self):
        session = walk_to(ExtractionStage.PROPERTY_CONFIRM)
        with pytest.raises(NotFinalized):
            session.finalize_ontology()

    def test_round_trip_state(self):
        session = walk_to(ExtractionStage.RELATIONSHIP_CONFIRM)
        from ontoforge.extraction import ExtractionSession
        clone = ExtractionSession.from_dict(session.to_dict(), client=session.client,
                                            templates=session.templates)
        assert clone.stage == session.stage
        assert [r.name for r in clone.proposed_relationships] == ["Has State"]
        assert clone.pending_question == session.pending_question


class TestUserDecision:
    def test_accept_with_feedback_rejected(self):
        with pytest.raises(BadParams):
            UserDecision("accept", feedback="hm").validate()

    def test_reject_needs_feedback(self):
        with pytest.raises(BadParams):
            UserDecision("rejectWithFeedback").validate()

    def test_edits_only_with_accept_with_edits(self):
        with pytest.raises(BadParams):
            UserDecision("accept", edits=[{}]).validate()
        with pytest.raises(BadParams):
            UserDecision("acceptWithEdits").validate()

    def test_unknown_kind(self):
        with pytest.raises(BadParams):
            UserDecision("maybe").validate()

    def test_round_trip(self):
        d = UserDecision("rejectWithFeedback", feedback="redo")
        assert UserDecision.from_dict(d.to_dict()).feedback == "redo"
