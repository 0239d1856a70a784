"""Acceptance suite: one test per shipping criterion.

Each test is self-contained and runs at the stated tolerance; the terminal
summary hook in conftest prints one PASS/FAIL line per criterion.
"""

import contextlib
import json
import random
import socket
import time

import pytest
from click.testing import CliRunner

from conftest import FIXTURES_DIR, bfs_components, random_kg, random_ontology
from ontoforge.cli import main
from ontoforge.cypher import (
    MemoryGraph,
    apply,
    emit_merge_script,
    escape_string,
    memory_from_kg,
    parse_cypher_subset,
    read_string_literal,
)
from ontoforge.errors import RetriesExhausted, StepFailed
from ontoforge.extraction import start_extraction
from ontoforge.generation import chunk_text
from ontoforge.llm import CountingClient, Fixture, ReplayClient
from ontoforge.model import (
    Concept,
    KgEdge,
    PropertySpec,
    RelationshipType,
    connected_components,
    graph_from_json,
    graph_to_json,
    normalize_identifier,
    ontology_from_json,
    ontology_to_json,
    validate_graph,
    validate_ontology,
)
from ontoforge.prompts import (
    MAX_ROUNDS,
    ParseFailure,
    parse_concept_lines,
    parse_property_lines,
    parse_relationship_lines,
)
from ontoforge.service import ServiceConfig, SessionService, run_scripted

FIXTURE_PATH = FIXTURES_DIR / "fixture.json"
TK = (FIXTURES_DIR / "tk.txt").read_text(encoding="utf-8")
TC = (FIXTURES_DIR / "tc.txt").read_text(encoding="utf-8")
DECISIONS = json.loads((FIXTURES_DIR / "decisions.json").read_text(encoding="utf-8"))

CASE_STUDY_CONCEPTS = {
    ("Equipment System", ("Cluster Tool", "Wafer Track System")),
    ("Equipment States", ("Productive State", "Scheduled Downtime State")),
    ("Sub-States", ("SDT preventive maintenance", "SDT setup")),
    ("Activities", ("Regular production", "Rework")),
    ("Metrics", ("Equipment-Dependent Metrics", "Equipment-Independent Metrics")),
}
CASE_STUDY_RELATIONSHIPS = {
    ("Has State", "Equipment System", "Equipment States"),
    ("Has Sub-State", "Equipment States", "Sub-States"),
    ("Has Activity", "Equipment States", "Activities"),
    ("Has Metric", "Equipment System", "Metrics"),
}
HUB_EXPLANATION = "Central node containing all equipment states, activities, and metrics."


@contextlib.contextmanager
def no_network():
    def blocked(*args, **kwargs):
        raise AssertionError("network access attempted during replay")

    original_create = socket.create_connection
    socket.socket.connect = blocked
    socket.create_connection = blocked
    try:
        yield
    finally:
        del socket.socket.connect
        socket.create_connection = original_create


def test_c1_golden_replay_byte_identical_offline(tmp_path):
    runner = CliRunner()
    started = time.perf_counter()
    with no_network():
        result = runner.invoke(main, ["replay", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - started
    assert result.exit_code == 0, result.output
    assert elapsed < 5.0, f"replay took {elapsed:.2f}s"

    ontology = ontology_from_json((tmp_path / "ontology.json").read_text(encoding="utf-8"))
    assert {(c.name, tuple(c.examples)) for c in ontology.concepts} == CASE_STUDY_CONCEPTS
    assert {(r.name, r.source, r.target)
            for r in ontology.relationships} == CASE_STUDY_RELATIONSHIPS
    assert {(p.concept, p.property_name) for p in ontology.properties} == {
        (name, "brief explanation") for name, _ in CASE_STUDY_CONCEPTS}

    kg = graph_from_json((tmp_path / "kg.json").read_text(encoding="utf-8"))
    hub = next(n for n in kg.nodes if n.id == "equipmentSystem1")
    assert hub.properties["name"] == "Equipment System"
    assert hub.properties["briefExplanation"] == HUB_EXPLANATION
    productive = next(n for n in kg.nodes if "Productive State" in n.properties["name"])
    assert any(
        normalize_identifier(e.relationship, "relationship-type") == "HAS_STATE"
        and e.source_id == hub.id and e.target_id == productive.id
        for e in kg.edges)

    for produced, golden in [("ontology.json", "ontology.golden.json"),
                             ("kg.json", "kg.golden.json"),
                             ("kg.cypher", "kg.golden.cypher")]:
        assert (tmp_path / produced).read_bytes() == (FIXTURES_DIR / golden).read_bytes()


def test_c2_merge_idempotence_200_graphs():
    master = random.Random(990816)
    started = time.perf_counter()
    for _ in range(200):
        sub = random.Random(master.getrandbits(64))
        ontology = random_ontology(sub)
        kg = random_kg(sub, ontology, max_nodes=50, max_edges=120)
        assert validate_graph(kg, ontology).valid
        expected = memory_from_kg(kg, ontology)
        ast = parse_cypher_subset(emit_merge_script(kg, ontology))
        for repetitions in (1, 2, 5):
            g = MemoryGraph()
            for _ in range(repetitions):
                apply(ast, g)
            assert g.same_content(expected), f"diverged after {repetitions} applications"
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"idempotence sweep took {elapsed:.2f}s"


def clone_ontology(o):
    return ontology_from_json(ontology_to_json(o))


def clone_graph(kg):
    return graph_from_json(graph_to_json(kg))


def test_c3_validation_mutation_suite():
    master = random.Random(571113)
    checked = 0
    for _ in range(20):
        sub = random.Random(master.getrandbits(64))
        ontology = random_ontology(sub)
        kg = random_kg(sub, ontology)
        if not ontology.relationships or not kg.nodes:
            continue
        checked += 1

        # unmutated artifacts must be perfectly clean
        assert validate_ontology(ontology).violations == []
        assert validate_graph(kg, ontology).violations == []

        mutated = clone_ontology(ontology)
        mutated.concepts.append(
            Concept(ontology.concepts[0].name, list(ontology.concepts[0].examples)))
        assert "DUP_CONCEPT" in {v.code for v in validate_ontology(mutated).violations}

        mutated = clone_ontology(ontology)
        mutated.relationships.append(
            RelationshipType("Rogue Link", ontology.concepts[0].name, "Ghost Concept"))
        assert "UNDECLARED_ENDPOINT" in {
            v.code for v in validate_ontology(mutated).violations}

        mutated = clone_ontology(ontology)
        mutated.properties.append(PropertySpec(ontology.concepts[0].name, "name"))
        assert "RESERVED_PROPERTY" in {
            v.code for v in validate_ontology(mutated).violations}

        mutated_kg = clone_graph(kg)
        mutated_kg.edges.append(KgEdge(
            relationship=ontology.relationships[0].name,
            source_id=kg.nodes[0].id, target_id="ghostTarget9"))
        assert "DANGLING_ENDPOINT" in {
            v.code for v in validate_graph(mutated_kg, ontology).violations}

        mutated_kg = clone_graph(kg)
        mutated_kg.nodes[0].properties["mysteryReading"] = "out of band"
        assert "UNDECLARED_PROPERTY" in {
            v.code for v in validate_graph(mutated_kg, ontology).violations}
    assert checked >= 15


CONCEPT_VARIANTS = [
    ("*Machine*: [Etcher, Stepper]", 1),
    ("*Machine*: [Etcher, Stepper]\n*State*: [Up, Down]", 2),
    ("   *Machine*: [Etcher, Stepper]", 1),
    ("*Machine* : [Etcher, Stepper]", 1),
    ("*Machine*: [Etcher, Stepper]   ", 1),
    ("*A B*: [x, y]\n\n*C D*: [u, v]", 2),
    ("Here are the concepts:\n*Machine*: [Etcher, Stepper]", 1),
    ("*State*: [Productive State (PRD), Scheduled Downtime (SDT, legacy)]", 1),
    ("*Anlage*: [Zoll, Grenzwert]", 1),
    ("*Machine*: [ Etcher , Stepper ]", 1),
    ("*Equipment States*: [Productive State, Scheduled Downtime State]", 1),
    ("\t*Machine*: [Etcher, Stepper]", 1),
    ("*Flow*: [a -> b, c]", 1),
    ("*Ratio*: [1:2, 3:4]", 1),
    ("*Machine*: [Etcher, Stepper]\r\n*State*: [Up, Down]", 2),
    ("", 0),
    ("   \n\n  ", 0),
    ("Preamble first.\n\n*Machine*: [Etcher, Stepper]", 1),
    ("*Counts*: [1, 2]", 1),
    ("*Sub-States*: [SDT preventive maintenance, SDT setup]", 1),
    ("Equipment states include PRD and SDT.", None),
    ("First prose line.\nSecond prose line.\n*Machine*: [a, b]", None),
    ("*Machine*: [a, b]\ntrailing prose", None),
    ("*Machine*: [Etcher]", None),
    ("*Machine*: [a, b, c]", None),
    ("*Machine*: []", None),
    ("*Machine*: [, b]", None),
    ("*Machine* [Etcher, Stepper]", None),
    ("*Machine*: Etcher, Stepper", None),
    ("*Machine*: [Etcher, Stepper", None),
    ("*Machine: [Etcher, Stepper]", None),
    ("**: [a, b]", None),
    ("*Machine*: [a, b] extra", None),
    ("*A*B*: [a, b]", None),
    ("Only prose here.\n", None),
]

ARROW_VARIANTS = [
    ("*Has State*: [Machine → State]", 1),
    ("*Has State*: [Machine -> State]", 1),
    ("*Has State*: [Machine→State]", 1),
    ("*Has State*: [Machine->State]", 1),
    ("*Has State*: [A → B]\n*Feeds*: [B -> C]", 2),
    ("These are the relationships:\n*Has State*: [Machine → State]", 1),
    ("*Has State*: [Cool-down (a → b) Unit → State]", 1),
    ("    *Has State*: [Machine → State]", 1),
    ("*Has State*: [A → B]\n\n*Feeds*: [B → C]", 2),
    ("*Hat Zustand*: [Anlage → Zustand]", 1),
    ("*Feeds*: [Sub-System → Filter]", 1),
    ("*Has State*: [Machine    →    State]", 1),
    ("", 0),
    ("*Rel 2*: [A → B]", 1),
    ("*Has State*: [Machine → State (active)]", 1),
    ("*Has State*: [A → B]\r\n*Feeds*: [B → C]", 2),
    ("\t*Has State*: [Machine → State]", 1),
    ("Preamble.\n\n*Has State*: [Machine → State]", 1),
    ("*Links*: [A, B → C]", 1),
    ("*Has Metric*: [Equipment System → Equipment-Dependent Metrics]", 1),
    ("The machine has states.", None),
    ("*Has State*: [Machine State]", None),
    ("*Has State*: [A → B → C]", None),
    ("*Has State*: [A → B -> C]", None),
    ("*Has State*: [→ State]", None),
    ("*Has State*: [Machine →]", None),
    ("*Has State* [Machine → State]", None),
    ("*Has State*: Machine → State", None),
    ("*Has State*: [Machine → State", None),
    ("*Has State*: [A → B]\ntrailing prose", None),
    ("*Has State*: [A → B] extra", None),
    ("**: [A → B]", None),
    ("*Has*: [(A → B)]", None),
    ("*Has*: [A → B]\ngarbage", None),
    ("*Has*: [A - > B]", None),
]


def test_c4_grammar_variants_and_fuzz():
    assert len(CONCEPT_VARIANTS) >= 30
    assert len(ARROW_VARIANTS) >= 30
    for text, expected in CONCEPT_VARIANTS:
        result = parse_concept_lines(text)
        if expected is None:
            assert isinstance(result, ParseFailure), f"accepted: {text!r}"
        else:
            assert not isinstance(result, ParseFailure), f"rejected: {text!r}"
            assert len(result) == expected, text
    for text, expected in ARROW_VARIANTS:
        for parser in (parse_relationship_lines, parse_property_lines):
            result = parser(text)
            if expected is None:
                assert isinstance(result, ParseFailure), f"accepted: {text!r}"
            else:
                assert not isinstance(result, ParseFailure), f"rejected: {text!r}"
                assert len(result) == expected, text

    rng = random.Random(240816)
    alphabet = "*[]()→:,->\n \tabXYZ\"\\德ß€\u0000\u001f" + "ev: [A → B]"
    parsers = (parse_concept_lines, parse_relationship_lines, parse_property_lines)
    for i in range(100_000):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
        result = parsers[i % 3](s)
        assert isinstance(result, (list, ParseFailure))


def test_c5_escaping_round_trip_fuzz():
    rng = random.Random(160816)

    def random_char():
        bucket = rng.random()
        if bucket < 0.35:
            return chr(rng.randint(32, 126))
        if bucket < 0.55:
            return rng.choice('"\\\n\t\r')
        if bucket < 0.65:
            return chr(rng.randint(0, 31))
        if bucket < 0.90:
            cp = rng.randint(0x80, 0xFFFF)
            while 0xD800 <= cp <= 0xDFFF:
                cp = rng.randint(0x80, 0xFFFF)
            return chr(cp)
        return chr(rng.randint(0x10000, 0x10FFFF))

    for _ in range(10_000):
        s = "".join(random_char() for _ in range(rng.randrange(0, 24)))
        literal = escape_string(s)
        value, end = read_string_literal(literal, 0)
        assert value == s
        assert end == len(literal)


def test_c6_connectivity_oracle(tmp_path):
    # every fixture-driven session must end on a single component
    config = ServiceConfig(backend="replay", fixture=str(FIXTURE_PATH),
                           data_dir=str(tmp_path / "data"))
    service = SessionService(config)
    _, artifacts = run_scripted(service, TK, TC, list(DECISIONS))
    kg = graph_from_json(artifacts["kg"])
    components = connected_components(kg)
    assert len(components) == 1
    assert components == bfs_components(kg)

    master = random.Random(101010)
    for _ in range(1000):
        sub = random.Random(master.getrandbits(64))
        ontology = random_ontology(sub)
        kg = random_kg(sub, ontology, max_nodes=sub.randint(1, 100),
                       max_edges=sub.randint(0, 150))
        assert connected_components(kg) == bfs_components(kg)


def test_c7_corrective_loop_budget():
    once = ReplayClient(Fixture.load(FIXTURES_DIR / "corrective_once.fixture.json"))
    session = start_extraction(TK, once)
    outcome = session.advance()
    assert outcome.corrective_rounds == 1
    assert len(outcome.proposals) == 5

    always = ReplayClient(Fixture.load(FIXTURES_DIR / "corrective_always.fixture.json"))
    session = start_extraction(TK, always)
    with pytest.raises(StepFailed) as exc:
        session.advance()
    assert isinstance(exc.value.cause, RetriesExhausted)
    assert exc.value.cause.rounds == MAX_ROUNDS == 3


def test_c8_determinism_and_call_count_audit(tmp_path):
    def run_once(workdir):
        counters = []

        def factory():
            client = CountingClient(ReplayClient(Fixture.load(FIXTURE_PATH)))
            counters.append(client)
            return client

        config = ServiceConfig(backend="replay", fixture=str(FIXTURE_PATH),
                               data_dir=str(workdir))
        service = SessionService(config, client_factory=factory)
        _, artifacts = run_scripted(service, TK, TC, list(DECISIONS))
        return artifacts, sum(c.count for c in counters)

    first_artifacts, first_count = run_once(tmp_path / "one")
    second_artifacts, second_count = run_once(tmp_path / "two")
    assert first_artifacts == second_artifacts
    assert first_count == second_count

    ontology = ontology_from_json(first_artifacts["ontology"])
    n_chunks = len(chunk_text(TC))
    per_chunk = (len(ontology.concepts) + len(ontology.relationships)
                 + len(ontology.properties) + 1)
    assert first_count == 3 + n_chunks * per_chunk == 18

    for key, golden in [("ontology", "ontology.golden.json"),
                        ("kg", "kg.golden.json"),
                        ("cypher", "kg.golden.cypher")]:
        assert first_artifacts[key] == (FIXTURES_DIR / golden).read_text(encoding="utf-8")
