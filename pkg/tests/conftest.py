"""Shared test machinery: seeded artifact generators, a local HTTP stub,
and paths to the bundled fixtures."""

from __future__ import annotations

import json
import random
import threading
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ontoforge.model import (
    Concept,
    KgEdge,
    KgNode,
    KnowledgeGraph,
    Ontology,
    PropertySpec,
    RelationshipType,
    normalize_identifier,
)

FIXTURES_DIR = Path(__file__).resolve().parents[1] / "src" / "ontoforge" / "fixtures"

_NOUNS = [
    "Pump Station", "Valve Block", "Sensor Array", "Cooling Loop", "Drive Motor",
    "Filter Bank", "Control Unit", "Feed Line", "Heat Exchanger", "Vacuum Chamber",
    "Load Port", "Transfer Arm", "Power Rail", "Gas Panel", "Chuck Assembly",
]
_PROPERTY_NAMES = [
    "brief explanation", "operating range", "failure mode", "vendor note",
    "inspection interval",
]
_REL_NAMES = ["Has Part", "Feeds Into", "Monitors", "Controls", "Backs Up", "Cools"]
_VALUE_WORDS = [
    "nominal", "degraded", "weekly", "stainless", "redundant", "primary",
    "calibrated", "sealed", "ambient", "filtered",
]


def random_ontology(rng: random.Random, n_concepts: int = 4) -> Ontology:
    """A small valid ontology with distinct names and declared properties."""
    concepts = []
    names = rng.sample(_NOUNS, n_concepts)
    for name in names:
        examples = rng.sample([w for w in _NOUNS if w != name], 2)
        concepts.append(Concept(name, examples))
    relationships = []
    rel_names = rng.sample(_REL_NAMES, min(len(_REL_NAMES), n_concepts))
    for rel in rel_names:
        src, dst = rng.choice(names), rng.choice(names)
        relationships.append(RelationshipType(rel, src, dst))
    # drop accidental duplicate triples
    seen = set()
    relationships = [
        r for r in relationships
        if (r.name, r.source, r.target) not in seen
        and not seen.add((r.name, r.source, r.target))
    ]
    properties = []
    for name in names:
        for prop in rng.sample(_PROPERTY_NAMES, rng.randint(1, 2)):
            properties.append(PropertySpec(name, prop))
    return Ontology(concepts, relationships, properties)


def random_kg(
    rng: random.Random,
    ontology: Ontology,
    max_nodes: int = 50,
    max_edges: int = 120,
) -> KnowledgeGraph:
    """A valid instance graph for the ontology; connectivity not guaranteed."""
    nodes: list[KgNode] = []
    counters: dict[str, int] = {}
    used: set[str] = set()
    n_nodes = rng.randint(1, max_nodes)
    concept_names = [c.name for c in ontology.concepts]
    for i in range(n_nodes):
        concept = rng.choice(concept_names)
        base_name = f"{rng.choice(_NOUNS)} {i}"
        stem = normalize_identifier(base_name, "node-id")
        counters[concept] = counters.get(concept, 0) + 1
        node_id = f"{stem}{counters[concept]}"
        while node_id in used:
            counters[concept] += 1
            node_id = f"{stem}{counters[concept]}"
        used.add(node_id)
        properties = {"name": base_name}
        allowed = sorted(ontology.property_keys_for(concept) - {"id", "name"})
        for key in allowed:
            if rng.random() < 0.6:
                properties[key] = " ".join(rng.sample(_VALUE_WORDS, 3))
        nodes.append(KgNode(node_id, concept, properties))

    by_concept: dict[str, list[KgNode]] = {}
    for n in nodes:
        by_concept.setdefault(n.concept, []).append(n)
    edges: list[KgEdge] = []
    seen_keys = set()
    for _ in range(rng.randint(0, max_edges)):
        rel = rng.choice(ontology.relationships) if ontology.relationships else None
        if rel is None:
            break
        sources = by_concept.get(rel.source, [])
        targets = by_concept.get(rel.target, [])
        if not sources or not targets:
            continue
        edge = KgEdge(relationship=rel.name,
                      source_id=rng.choice(sources).id,
                      target_id=rng.choice(targets).id)
        if edge.key() in seen_keys:
            continue
        seen_keys.add(edge.key())
        edges.append(edge)
    return KnowledgeGraph(nodes, edges)


def bfs_components(kg: KnowledgeGraph) -> list[list[str]]:
    """Independent connectivity oracle: plain BFS over the undirected view."""
    adjacency: dict[str, set[str]] = {n.id: set() for n in kg.nodes}
    for e in kg.edges:
        adjacency[e.source_id].add(e.target_id)
        adjacency[e.target_id].add(e.source_id)
    seen: set[str] = set()
    components: list[list[str]] = []
    for start in adjacency:
        if start in seen:
            continue
        queue = deque([start])
        seen.add(start)
        group = []
        while queue:
            node = queue.popleft()
            group.append(node)
            for nxt in adjacency[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        components.append(sorted(group))
    components.sort(key=lambda g: g[0])
    return components


class StubHandler(BaseHTTPRequestHandler):
    """Records requests; replies come from the server's scripted queue."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        record = {
            "path": self.path,
            "headers": dict(self.headers),
            "body": json.loads(raw) if raw else None,
        }
        self.server.requests.append(record)
        status, payload = self.server.next_response(record)
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class StubServer(ThreadingHTTPServer):
    """Local HTTP endpoint with a scripted response queue.

    Script entries are (status, payload) pairs or callables of the request
    record; when the queue is empty `default` answers.
    """

    def __init__(self, default=(200, {"results": [], "errors": []})):
        super().__init__(("127.0.0.1", 0), StubHandler)
        self.requests: list[dict] = []
        self.script: deque = deque()
        self.default = default

    def next_response(self, record):
        if self.script:
            entry = self.script.popleft()
        else:
            entry = self.default
        if callable(entry):
            return entry(record)
        return entry

    @property
    def url(self) -> str:
        host, port = self.server_address
        return f"http://{host}:{port}"


@pytest.fixture
def stub_server():
    server = StubServer()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def openai_stub(responses: list[str]) -> StubServer:
    """A /v1/chat/completions endpoint answering with the given contents."""
    server = StubServer()
    for content in responses:
        server.script.append(
            (200, {"choices": [{"message": {"role": "assistant", "content": content}}]})
        )
    return server


@pytest.fixture
def rng():
    return random.Random(20260816)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of every run."""
    lines = []
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                lines.append((nodeid, label))
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid, label in sorted(set(lines)):
        terminalreporter.write_line(f"{label}  {nodeid.split('::')[-1]}")
