"""LLM-assisted ontology extraction and knowledge-graph generation.

The pipeline runs in two human-confirmed stages: an ontology is extracted
from a short description of the domain, then a knowledge graph is populated
from a comprehensive text and emitted as an idempotent Cypher MERGE script.
"""

from .cypher import (
    CypherScript,
    MemoryGraph,
    emit_merge_script,
    parse_cypher_subset,
    push_to_database,
    verify_roundtrip,
)
from .extraction import ExtractionSession, UserDecision, start_extraction
from .generation import GenerationSession, chunk_text, start_generation
from .llm import (
    ChatMessage,
    CompletionParams,
    Conversation,
    Fixture,
    LiveClient,
    RecordClient,
    ReplayClient,
)
from .model import (
    Concept,
    KgEdge,
    KgNode,
    KnowledgeGraph,
    Ontology,
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
from .service import ServiceConfig, SessionService, run_scripted

__version__ = "0.1.0"

__all__ = [
    "ChatMessage",
    "CompletionParams",
    "Concept",
    "Conversation",
    "CypherScript",
    "ExtractionSession",
    "Fixture",
    "GenerationSession",
    "KgEdge",
    "KgNode",
    "KnowledgeGraph",
    "LiveClient",
    "MemoryGraph",
    "Ontology",
    "PropertySpec",
    "RecordClient",
    "RelationshipType",
    "ReplayClient",
    "ServiceConfig",
    "SessionService",
    "UserDecision",
    "chunk_text",
    "connected_components",
    "emit_merge_script",
    "graph_from_json",
    "graph_to_json",
    "normalize_identifier",
    "ontology_from_json",
    "ontology_to_json",
    "parse_cypher_subset",
    "push_to_database",
    "run_scripted",
    "start_extraction",
    "start_generation",
    "validate_graph",
    "validate_ontology",
    "verify_roundtrip",
    "__version__",
]
