"""Ontology and property-graph data model.

Holds the schema types (concepts, typed relationships, property specs), the
instance types (nodes, edges), validation for both layers, identifier
normalization, undirected connectivity, and the canonical JSON file formats.
Everything here is a plain value type plus pure functions, safe to share
across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Literal

from .errors import DanglingEdge, EmptyName, InvalidOntology

# Property keys implicit on every node; never listed in Ontology.properties.
MANDATORY_KEYS = ("id", "name")

IdentifierKind = Literal["node-id", "label", "relationship-type", "property-key"]


@dataclass
class Concept:
    """A schema-level category of instances (a node label in graph terms)."""

    name: str
    examples: list[str] = field(default_factory=list)
    description: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "examples": list(self.examples)}
        if self.description is not None:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Concept:
        return cls(
            name=d["name"],
            examples=list(d.get("examples", [])),
            description=d.get("description"),
        )


@dataclass
class RelationshipType:
    """A directed, named relationship between two declared concepts."""

    name: str
    source: str
    target: str

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "source": self.source, "target": self.target}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RelationshipType:
        return cls(name=d["name"], source=d["source"], target=d["target"])


@dataclass
class PropertySpec:
    """Declares an optional property on instances of one concept."""

    concept: str
    property_name: str

    def to_dict(self) -> dict[str, Any]:
        return {"concept": self.concept, "propertyName": self.property_name}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PropertySpec:
        return cls(concept=d["concept"], property_name=d["propertyName"])


@dataclass
class Ontology:
    """A confirmed schema: concepts, typed relationships, property specs."""

    concepts: list[Concept] = field(default_factory=list)
    relationships: list[RelationshipType] = field(default_factory=list)
    properties: list[PropertySpec] = field(default_factory=list)

    def concept_names(self) -> list[str]:
        return [c.name for c in self.concepts]

    def find_concept(self, name: str) -> Concept | None:
        """Case-insensitive, trimmed lookup of a declared concept."""
        wanted = name.strip().lower()
        for c in self.concepts:
            if c.name.strip().lower() == wanted:
                return c
        return None

    def find_relationship(self, name: str) -> RelationshipType | None:
        """Case-insensitive lookup by relationship name (first declaration wins)."""
        wanted = name.strip().lower()
        for r in self.relationships:
            if r.name.strip().lower() == wanted:
                return r
        return None

    def property_keys_for(self, concept: str) -> set[str]:
        """Normalized property keys declared for a concept."""
        return {
            normalize_identifier(p.property_name, "property-key")
            for p in self.properties
            if p.concept == concept
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "concepts": [c.to_dict() for c in self.concepts],
            "relationships": [r.to_dict() for r in self.relationships],
            "properties": [p.to_dict() for p in self.properties],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Ontology:
        return cls(
            concepts=[Concept.from_dict(c) for c in d.get("concepts", [])],
            relationships=[RelationshipType.from_dict(r) for r in d.get("relationships", [])],
            properties=[PropertySpec.from_dict(p) for p in d.get("properties", [])],
        )


@dataclass
class KgNode:
    """A concept instance. `properties` always carries `name`; `id` is a field."""

    id: str
    concept: str
    properties: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "concept": self.concept,
            "properties": _ordered_properties(self.properties),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> KgNode:
        return cls(id=d["id"], concept=d["concept"], properties=dict(d.get("properties", {})))


@dataclass
class KgEdge:
    """A directed, typed edge between two nodes, by relationship name."""

    relationship: str
    source_id: str
    target_id: str

    def key(self) -> tuple[str, str, str]:
        return (self.relationship, self.source_id, self.target_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "relationship": self.relationship,
            "sourceId": self.source_id,
            "targetId": self.target_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> KgEdge:
        return cls(relationship=d["relationship"], source_id=d["sourceId"], target_id=d["targetId"])


@dataclass
class KnowledgeGraph:
    """A property-graph instance conforming to an Ontology."""

    nodes: list[KgNode] = field(default_factory=list)
    edges: list[KgEdge] = field(default_factory=list)

    def node_by_id(self, node_id: str) -> KgNode | None:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def to_dict(self) -> dict[str, Any]:
        nodes = sorted(self.nodes, key=lambda n: n.id)
        edges = sorted(self.edges, key=lambda e: (e.source_id, e.relationship, e.target_id))
        return {
            "nodes": [n.to_dict() for n in nodes],
            "edges": [e.to_dict() for e in edges],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> KnowledgeGraph:
        return cls(
            nodes=[KgNode.from_dict(n) for n in d.get("nodes", [])],
            edges=[KgEdge.from_dict(e) for e in d.get("edges", [])],
        )


@dataclass
class Violation:
    code: str
    message: str
    subject: str

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": self.message, "subject": self.subject}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def summary(self) -> str:
        if self.valid:
            return "valid"
        return "; ".join(f"{v.code}({v.subject}): {v.message}" for v in self.violations)

    def to_dict(self) -> dict[str, Any]:
        return {"valid": self.valid, "violations": [v.to_dict() for v in self.violations]}


# --- identifier normalization ---

_PARENS = re.compile(r"\([^()]*\)")
_ALNUM_RUN = re.compile(r"[A-Za-z0-9]+")
# Camel-hump boundaries: fooBar -> foo|Bar, HTTPState -> HTTP|State. Splitting
# on humps makes normalization idempotent on its own output.
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def _words(raw: str, drop_parens: bool) -> list[str]:
    s = _PARENS.sub(" ", raw) if drop_parens else raw
    words: list[str] = []
    for run in _ALNUM_RUN.findall(s):
        words.extend(w for w in _CAMEL_BOUNDARY.split(run) if w)
    return words


def _capitalized(word: str) -> str:
    # Preserve tail case so all-caps words survive a round trip.
    return word[0].upper() + word[1:]


def normalize_identifier(raw: str, kind: IdentifierKind, ordinal: int | None = None) -> str:
    """Map a human-readable name to a graph identifier.

    node-id and property-key use lowerCamelCase, label uses UpperCamelCase,
    relationship-type uses UPPER_SNAKE_CASE. Parenthesized abbreviations such
    as "(PRD)" are dropped from node ids and labels. Only ASCII alphanumeric
    characters survive; a name that normalizes to nothing raises EmptyName.
    """
    if not raw or not raw.strip():
        raise EmptyName(f"cannot normalize empty name {raw!r}")
    if ordinal is not None and kind != "node-id":
        raise ValueError("ordinal only applies to node-id")

    words = _words(raw, drop_parens=kind in ("node-id", "label"))
    if not words:
        raise EmptyName(f"{raw!r} normalizes to empty for kind {kind!r}")

    if kind == "node-id" or kind == "property-key":
        out = words[0].lower() + "".join(_capitalized(w) for w in words[1:])
        if kind == "node-id" and ordinal is not None:
            if ordinal < 1:
                raise ValueError("ordinal must be positive")
            out += str(ordinal)
        return out
    if kind == "label":
        return "".join(_capitalized(w) for w in words)
    if kind == "relationship-type":
        return "_".join(w.upper() for w in words)
    raise ValueError(f"unknown identifier kind {kind!r}")


def _is_normalized_node_id(node_id: str) -> bool:
    try:
        return normalize_identifier(node_id, "node-id") == node_id
    except EmptyName:
        return False


# --- validation ---

def validate_ontology(o: Ontology) -> ValidationReport:
    """Check every ontology invariant; violations come back in declaration order."""
    violations: list[Violation] = []
    seen_names: dict[str, str] = {}
    for c in o.concepts:
        name = c.name.strip()
        if not name:
            violations.append(Violation("EMPTY_NAME", "concept name is empty", repr(c.name)))
            continue
        lowered = name.lower()
        if lowered in seen_names:
            violations.append(
                Violation(
                    "DUP_CONCEPT",
                    f"duplicate concept name (conflicts with {seen_names[lowered]!r})",
                    c.name,
                )
            )
        else:
            seen_names[lowered] = c.name

    declared = {c.name.strip().lower() for c in o.concepts if c.name.strip()}
    seen_rels: set[tuple[str, str, str]] = set()
    for r in o.relationships:
        subject = f"{r.name} [{r.source} -> {r.target}]"
        if not r.name.strip():
            violations.append(Violation("EMPTY_NAME", "relationship name is empty", subject))
        for endpoint in (r.source, r.target):
            if endpoint.strip().lower() not in declared:
                violations.append(
                    Violation(
                        "UNDECLARED_ENDPOINT",
                        f"endpoint {endpoint!r} is not a declared concept",
                        subject,
                    )
                )
        triple = (r.name, r.source, r.target)
        if triple in seen_rels:
            violations.append(Violation("DUP_RELATIONSHIP", "duplicate relationship triple", subject))
        seen_rels.add(triple)

    seen_props: set[tuple[str, str]] = set()
    for p in o.properties:
        subject = f"{p.concept}.{p.property_name}"
        if not p.property_name.strip():
            violations.append(Violation("EMPTY_NAME", "property name is empty", subject))
            continue
        if p.concept.strip().lower() not in declared:
            violations.append(
                Violation(
                    "UNDECLARED_CONCEPT",
                    f"property declared on unknown concept {p.concept!r}",
                    subject,
                )
            )
        try:
            key = normalize_identifier(p.property_name, "property-key")
        except EmptyName:
            violations.append(Violation("EMPTY_NAME", "property name has no identifier content", subject))
            continue
        if key in MANDATORY_KEYS:
            violations.append(
                Violation(
                    "RESERVED_PROPERTY",
                    f"{p.property_name!r} collides with the mandatory {key!r} property",
                    subject,
                )
            )
        pair = (p.concept, key)
        if pair in seen_props:
            violations.append(Violation("DUP_PROPERTY", "duplicate property spec", subject))
        seen_props.add(pair)

    return ValidationReport(violations)


def validate_graph(kg: KnowledgeGraph, o: Ontology) -> ValidationReport:
    """Check a graph against its ontology.

    The ontology itself must be valid (raises InvalidOntology otherwise).
    Connectivity is deliberately not checked here; see connected_components.
    """
    ontology_report = validate_ontology(o)
    if not ontology_report.valid:
        raise InvalidOntology(ontology_report)

    violations: list[Violation] = []
    declared_concepts = {c.name for c in o.concepts}
    ids: set[str] = set()
    for n in kg.nodes:
        if n.id in ids:
            violations.append(Violation("DUP_NODE_ID", "duplicate node id", n.id))
        ids.add(n.id)
        if not _is_normalized_node_id(n.id):
            violations.append(Violation("INVALID_ID", "id is not in normalized form", n.id))
        if n.concept not in declared_concepts:
            violations.append(
                Violation("UNDECLARED_CONCEPT", f"concept {n.concept!r} is not declared", n.id)
            )
        if "name" not in n.properties or not n.properties.get("name", "").strip():
            violations.append(Violation("MISSING_NAME", "node has no name property", n.id))
        allowed = o.property_keys_for(n.concept)
        for key in n.properties:
            if key == "name":
                continue
            if key == "id":
                violations.append(Violation("RESERVED_PROPERTY", "id stored as a property", n.id))
                continue
            if key not in allowed:
                violations.append(
                    Violation(
                        "UNDECLARED_PROPERTY",
                        f"property {key!r} has no declaration for concept {n.concept!r}",
                        n.id,
                    )
                )

    by_id = {n.id: n for n in kg.nodes}
    declared_triples = {(r.name, r.source, r.target) for r in o.relationships}
    declared_rel_names = {r.name for r in o.relationships}
    seen_edges: set[tuple[str, str, str]] = set()
    for e in kg.edges:
        subject = f"{e.source_id} -[{e.relationship}]-> {e.target_id}"
        dangling = False
        for endpoint in (e.source_id, e.target_id):
            if endpoint not in by_id:
                violations.append(
                    Violation("DANGLING_ENDPOINT", f"edge endpoint {endpoint!r} does not exist", subject)
                )
                dangling = True
        if e.relationship not in declared_rel_names:
            violations.append(
                Violation(
                    "UNDECLARED_RELATIONSHIP",
                    f"relationship {e.relationship!r} is not declared",
                    subject,
                )
            )
        elif not dangling:
            src = by_id[e.source_id].concept
            dst = by_id[e.target_id].concept
            if (e.relationship, src, dst) not in declared_triples:
                violations.append(
                    Violation(
                        "ENDPOINT_MISMATCH",
                        f"{e.relationship!r} is not declared from {src!r} to {dst!r}",
                        subject,
                    )
                )
        if e.key() in seen_edges:
            violations.append(Violation("DUP_EDGE", "duplicate edge triple", subject))
        seen_edges.add(e.key())

    return ValidationReport(violations)


# --- connectivity ---

def connected_components(kg: KnowledgeGraph) -> list[list[str]]:
    """Partition node ids into undirected components.

    Components are ordered by their smallest node id; ids inside a component
    are sorted. Raises DanglingEdge when an edge references a missing node.
    """
    ids = [n.id for n in kg.nodes]
    known = set(ids)
    parent: dict[str, str] = {i: i for i in ids}

    def find(x: str) -> str:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for e in kg.edges:
        for endpoint in (e.source_id, e.target_id):
            if endpoint not in known:
                raise DanglingEdge(f"edge references missing node {endpoint!r}")
        ra, rb = find(e.source_id), find(e.target_id)
        if ra != rb:
            parent[rb] = ra

    groups: dict[str, list[str]] = {}
    for i in ids:
        groups.setdefault(find(i), []).append(i)
    components = [sorted(members) for members in groups.values()]
    components.sort(key=lambda c: c[0])
    return components


# --- canonical serialization ---

def _ordered_properties(props: dict[str, str]) -> dict[str, str]:
    # name first, remaining keys sorted: the one canonical property order,
    # shared with the Cypher emitter's SET clause.
    out: dict[str, str] = {}
    if "name" in props:
        out["name"] = props["name"]
    for key in sorted(k for k in props if k != "name"):
        out[key] = props[key]
    return out


def _dumps(payload: dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def ontology_to_json(o: Ontology) -> str:
    """Canonical ontology file: declaration order preserved, UTF-8, stable bytes."""
    return _dumps(o.to_dict())


def ontology_from_json(text: str) -> Ontology:
    return Ontology.from_dict(json.loads(text))


def graph_to_json(kg: KnowledgeGraph) -> str:
    """Canonical KG file: nodes by id, edges by (sourceId, relationship, targetId)."""
    return _dumps(kg.to_dict())


def graph_from_json(text: str) -> KnowledgeGraph:
    return KnowledgeGraph.from_dict(json.loads(text))


def graphs_structurally_equal(a: KnowledgeGraph, b: KnowledgeGraph) -> bool:
    """Equality on sorted node/edge sets, ignoring list order."""
    return a.to_dict() == b.to_dict()
