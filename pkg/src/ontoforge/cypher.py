"""MERGE-based Cypher emission, a parser for exactly that subset, and an
in-memory interpreter used as the idempotence oracle before anything is
offered to a real database.

Node statements merge on {id} only and carry the other properties in SET, so
re-running a script after a property edit updates in place. Edge statements
MATCH both endpoints first; a missing endpoint makes the MERGE a no-op instead
of creating a dangling node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import requests

from .errors import AuthFailed, InvalidGraph, ServerError, SubsetViolation, Unreachable
from .model import (
    KnowledgeGraph,
    Ontology,
    _ordered_properties,
    normalize_identifier,
    validate_graph,
)

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 50


# --- string literals ---

def escape_string(s: str) -> str:
    """Double-quoted literal; backslash escapes for \\ \" and control chars."""
    out = ['"']
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def read_string_literal(text: str, pos: int) -> tuple[str, int]:
    """Read a double-quoted literal starting at pos; returns (value, next pos)."""
    if pos >= len(text) or text[pos] != '"':
        raise SubsetViolation("expected string literal", pos)
    out: list[str] = []
    i = pos + 1
    while i < len(text):
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= len(text):
                raise SubsetViolation("dangling escape", i)
            esc = text[i + 1]
            if esc == "\\":
                out.append("\\")
            elif esc == '"':
                out.append('"')
            elif esc == "n":
                out.append("\n")
            elif esc == "t":
                out.append("\t")
            elif esc == "r":
                out.append("\r")
            elif esc == "u":
                hex_digits = text[i + 2:i + 6]
                if len(hex_digits) != 4 or any(c not in "0123456789abcdefABCDEF" for c in hex_digits):
                    raise SubsetViolation("bad \\u escape", i)
                out.append(chr(int(hex_digits, 16)))
                i += 6
                continue
            else:
                raise SubsetViolation(f"unknown escape \\{esc}", i)
            i += 2
            continue
        out.append(ch)
        i += 1
    raise SubsetViolation("unterminated string literal", pos)


# --- script and AST ---

@dataclass
class CypherScript:
    statements: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return "".join(s + ";\n" for s in self.statements)


@dataclass
class NodeMerge:
    variable: str
    label: str
    id_value: str
    set_props: list[tuple[str, str]]


@dataclass
class EdgeMerge:
    source_id: str
    rel_type: str
    target_id: str


@dataclass
class CypherAst:
    statements: list[NodeMerge | EdgeMerge] = field(default_factory=list)


# --- emission ---

def emit_merge_script(kg: KnowledgeGraph, o: Ontology) -> CypherScript:
    """Deterministic script: node statements sorted by id, then edge
    statements sorted by (sourceId, relationship type, targetId)."""
    report = validate_graph(kg, o)
    if not report.valid:
        raise InvalidGraph(report)
    statements: list[str] = []
    for node in sorted(kg.nodes, key=lambda n: n.id):
        label = normalize_identifier(node.concept, "label")
        sets = ", ".join(
            f"n.{key} = {escape_string(value)}"
            for key, value in _ordered_properties(node.properties).items()
        )
        statements.append(
            f"MERGE (n:{label} {{id: {escape_string(node.id)}}}) SET {sets}")

    def edge_key(e):
        return (e.source_id, normalize_identifier(e.relationship, "relationship-type"), e.target_id)

    for edge in sorted(kg.edges, key=edge_key):
        rel_type = normalize_identifier(edge.relationship, "relationship-type")
        statements.append(
            f"MATCH (a {{id: {escape_string(edge.source_id)}}}) "
            f"MATCH (b {{id: {escape_string(edge.target_id)}}}) "
            f"MERGE (a)-[:{rel_type}]->(b)")
    return CypherScript(statements)


# --- subset parser ---

class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def literal(self, expected: str):
        self.skip_ws()
        if not self.text.startswith(expected, self.pos):
            raise SubsetViolation(f"expected {expected!r}", self.pos)
        self.pos += len(expected)

    def peek_word(self) -> str:
        self.skip_ws()
        i = self.pos
        while i < len(self.text) and (self.text[i].isalnum() or self.text[i] == "_"):
            i += 1
        return self.text[self.pos:i]

    def identifier(self) -> str:
        self.skip_ws()
        word = self.peek_word()
        if not word or word[0].isdigit():
            raise SubsetViolation("expected identifier", self.pos)
        self.pos += len(word)
        return word

    def string(self) -> str:
        self.skip_ws()
        value, self.pos = read_string_literal(self.text, self.pos)
        return value


def _parse_node_merge(sc: _Scanner) -> NodeMerge:
    sc.literal("MERGE")
    sc.literal("(")
    variable = sc.identifier()
    sc.literal(":")
    label = sc.identifier()
    sc.literal("{")
    key = sc.identifier()
    if key != "id":
        raise SubsetViolation("node merge pattern must key on id", sc.pos)
    sc.literal(":")
    id_value = sc.string()
    sc.literal("}")
    sc.literal(")")
    sc.literal("SET")
    set_props: list[tuple[str, str]] = []
    while True:
        var = sc.identifier()
        if var != variable:
            raise SubsetViolation(f"SET references unknown variable {var!r}", sc.pos)
        sc.literal(".")
        prop = sc.identifier()
        sc.literal("=")
        value = sc.string()
        set_props.append((prop, value))
        sc.skip_ws()
        if sc.pos < len(sc.text) and sc.text[sc.pos] == ",":
            sc.pos += 1
            continue
        break
    sc.literal(";")
    return NodeMerge(variable, label, id_value, set_props)


def _parse_edge_merge(sc: _Scanner) -> EdgeMerge:
    def match_clause() -> tuple[str, str]:
        sc.literal("MATCH")
        sc.literal("(")
        var = sc.identifier()
        sc.literal("{")
        key = sc.identifier()
        if key != "id":
            raise SubsetViolation("match pattern must key on id", sc.pos)
        sc.literal(":")
        value = sc.string()
        sc.literal("}")
        sc.literal(")")
        return var, value

    var_a, source_id = match_clause()
    var_b, target_id = match_clause()
    sc.literal("MERGE")
    sc.literal("(")
    left = sc.identifier()
    sc.literal(")")
    sc.literal("-")
    sc.literal("[")
    sc.literal(":")
    rel_type = sc.identifier()
    sc.literal("]")
    sc.literal("->")
    sc.literal("(")
    right = sc.identifier()
    sc.literal(")")
    sc.literal(";")
    if left != var_a or right != var_b:
        raise SubsetViolation("edge merge must connect the two matched variables", sc.pos)
    return EdgeMerge(source_id, rel_type, target_id)


def parse_cypher_subset(script: CypherScript | str) -> CypherAst:
    """Parse exactly the emitted grammar; anything else is a SubsetViolation."""
    text = script.text if isinstance(script, CypherScript) else script
    sc = _Scanner(text)
    ast = CypherAst()
    while not sc.at_end():
        word = sc.peek_word()
        if word == "MERGE":
            ast.statements.append(_parse_node_merge(sc))
        elif word == "MATCH":
            ast.statements.append(_parse_edge_merge(sc))
        else:
            raise SubsetViolation(f"statement must start with MERGE or MATCH, got {word!r}", sc.pos)
    return ast


# --- in-memory interpreter ---

@dataclass
class MemoryGraph:
    """Nodes keyed by (label, id); typed directed edges between node keys."""

    nodes: dict[tuple[str, str], dict[str, str]] = field(default_factory=dict)
    edges: set[tuple[tuple[str, str], str, tuple[str, str]]] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)

    def same_content(self, other: MemoryGraph) -> bool:
        return self.nodes == other.nodes and self.edges == other.edges

    def snapshot(self) -> MemoryGraph:
        return MemoryGraph(
            nodes={k: dict(v) for k, v in self.nodes.items()},
            edges=set(self.edges),
        )


def apply(ast: CypherAst, g: MemoryGraph) -> MemoryGraph:
    """MERGE semantics: create when absent, no-op when present; an edge whose
    MATCH finds no endpoint is recorded as a warning and skipped."""
    for st in ast.statements:
        if isinstance(st, NodeMerge):
            key = (st.label, st.id_value)
            if key not in g.nodes:
                g.nodes[key] = {"id": st.id_value}
            for prop, value in st.set_props:
                g.nodes[key][prop] = value
        else:
            sources = [k for k in g.nodes if k[1] == st.source_id]
            targets = [k for k in g.nodes if k[1] == st.target_id]
            if not sources or not targets:
                g.warnings.append(
                    f"edge {st.rel_type} {st.source_id}->{st.target_id}: endpoint not matched")
                continue
            for a in sources:
                for b in targets:
                    g.edges.add((a, st.rel_type, b))
    return g


def memory_from_kg(kg: KnowledgeGraph, o: Ontology) -> MemoryGraph:
    """The MemoryGraph a correct application of the emitted script must yield."""
    g = MemoryGraph()
    key_for: dict[str, tuple[str, str]] = {}
    for node in kg.nodes:
        label = normalize_identifier(node.concept, "label")
        key = (label, node.id)
        key_for[node.id] = key
        g.nodes[key] = {"id": node.id, **node.properties}
    for edge in kg.edges:
        rel_type = normalize_identifier(edge.relationship, "relationship-type")
        g.edges.add((key_for[edge.source_id], rel_type, key_for[edge.target_id]))
    return g


def verify_roundtrip(kg: KnowledgeGraph, o: Ontology) -> bool:
    """True iff the emitted script rebuilds the KG exactly and a second
    application changes nothing."""
    script = emit_merge_script(kg, o)
    ast = parse_cypher_subset(script)
    expected = memory_from_kg(kg, o)
    g = apply(ast, MemoryGraph())
    if not g.same_content(expected):
        return False
    again = apply(ast, g)
    return again.same_content(expected)


# --- database upload ---

@dataclass
class BatchStatus:
    index: int
    statements: int
    ok: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"index": self.index, "statements": self.statements,
                "ok": self.ok, "detail": self.detail}


@dataclass
class UploadReport:
    batches: list[BatchStatus] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(b.ok for b in self.batches)

    @property
    def first_failed(self) -> int | None:
        for b in self.batches:
            if not b.ok:
                return b.index
        return None

    def raise_for_status(self):
        failed = self.first_failed
        if failed is not None:
            raise ServerError(failed, self.batches[failed - 1].detail)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "firstFailed": self.first_failed,
                "batches": [b.to_dict() for b in self.batches]}


def push_to_database(script: CypherScript, endpoint: str,
                     credentials: tuple[str, str] | None = None,
                     database: str = "neo4j",
                     batch_size: int = DEFAULT_BATCH_SIZE,
                     timeout: float = 30.0,
                     session: requests.Session | None = None) -> UploadReport:
    """POST the script in batches to the transactional-commit endpoint.

    A connection failure before anything was delivered raises Unreachable;
    credential rejection raises AuthFailed; a mid-run batch failure is marked
    in the report and later batches are never sent.
    """
    url = endpoint.rstrip("/") + f"/db/{database}/tx/commit"
    http = session or requests.Session()
    report = UploadReport()
    batches = [script.statements[i:i + batch_size]
               for i in range(0, len(script.statements), batch_size)]
    for number, batch in enumerate(batches, start=1):
        body = {"statements": [{"statement": s} for s in batch]}
        try:
            resp = http.post(url, json=body, auth=credentials, timeout=timeout)
        except requests.RequestException as exc:
            if number == 1:
                raise Unreachable(f"cannot reach {url}: {exc}") from exc
            report.batches.append(BatchStatus(number, len(batch), False, str(exc)))
            return report
        if resp.status_code in (401, 403):
            raise AuthFailed(f"database rejected credentials (HTTP {resp.status_code})")
        errors = []
        if resp.ok:
            try:
                errors = resp.json().get("errors", [])
            except ValueError:
                errors = []
        if not resp.ok or errors:
            detail = f"HTTP {resp.status_code}" if not resp.ok else str(errors[0])
            report.batches.append(BatchStatus(number, len(batch), False, detail))
            return report
        report.batches.append(BatchStatus(number, len(batch), True))
    return report
