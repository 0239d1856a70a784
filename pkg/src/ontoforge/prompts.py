"""Step-defined prompt building and the starred line grammars.

Each pipeline step has an explicit instruction template (not a bare "think
step by step"), and every machine-facing step pins an exact output format.
The three line grammars the model must produce are parsed here, and a bounded
corrective loop re-prompts with the offending line when parsing fails.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import MissingSlot, RetriesExhausted
from .llm import ChatClient, CompletionParams, Conversation, DEFAULT_PARAMS


class StepId(Enum):
    # ontology extraction
    CONCEPT_PROPOSAL = "concept-proposal"
    CONCEPT_CONFIRMATION = "concept-confirmation"
    RELATIONSHIP_PROPOSAL = "relationship-proposal"
    RELATIONSHIP_CONFIRMATION = "relationship-confirmation"
    PROPERTY_PROPOSAL = "property-proposal"
    PROPERTY_CONFIRMATION = "property-confirmation"
    # knowledge-graph generation
    INSTANCE_EXTRACTION = "instance-extraction"
    RELATIONSHIP_EXTRACTION = "relationship-extraction"
    PROPERTY_EXTRACTION = "property-extraction"
    TEXT_REVIEW = "text-review"
    GRAPH_REVIEW = "graph-review"


class LineGrammar(Enum):
    """Expected line formats; the enum value is the format string itself."""

    CONCEPT = "*Category Name*: [Two instances as examples]"
    RELATIONSHIP = "*Relationship Name*: [Concept1 → Concept2]"
    PROPERTY = "*Property Name*: [Concept Name → Property Name]"
    INSTANCE = "*New Instance*: [Concept Name → Instance Name]"
    VALUE = "*Property Name*: [Instance Name → Property Value]"
    EDGE = "*Relationship Name*: [Source Instance → Target Instance]"


@dataclass
class ParsedConceptLine:
    category: str
    examples: list[str]


@dataclass
class ParsedArrowLine:
    name: str
    left: str
    right: str


@dataclass
class ParsedRelationshipLine:
    name: str
    source: str
    target: str


@dataclass
class ParsedPropertyLine:
    concept: str
    property_name: str


@dataclass
class ParseFailure:
    line_number: int
    line_text: str
    expected_grammar: LineGrammar


# --- line scanning ---

_STARRED = re.compile(r"^\s*\*([^*]+)\*\s*:\s*\[(.*)\]\s*$")


def _split_top_level_commas(body: str) -> list[str]:
    """Split on commas outside parentheses, so "Productive State (PRD)" stays whole."""
    items: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if ch == "," and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
    items.append("".join(current))
    return items


def _split_single_arrow(body: str) -> tuple[str, str] | None:
    """Split at the single top-level arrow ("→" or "->"); None if not exactly one."""
    parts: list[str] = []
    depth = 0
    current: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if depth == 0 and ch == "→":
            parts.append("".join(current))
            current = []
            i += 1
            continue
        if depth == 0 and ch == "-" and i + 1 < len(body) and body[i + 1] == ">":
            parts.append("".join(current))
            current = []
            i += 2
            continue
        current.append(ch)
        i += 1
    parts.append("".join(current))
    if len(parts) != 2:
        return None
    left, right = parts[0].strip(), parts[1].strip()
    if not left or not right:
        return None
    return left, right


def _candidate_lines(text: str, grammar: LineGrammar):
    """Collect (line_number, line) for starred lines, or a ParseFailure.

    Blank lines are ignored. One plain line before the first starred line is
    tolerated as a preamble, but only when starred output actually follows;
    prose with no starred line at all fails at that line.
    """
    starred: list[tuple[int, str]] = []
    preamble: tuple[int, str] | None = None
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("*"):
            starred.append((number, line))
            continue
        if not starred and preamble is None:
            preamble = (number, line)
            continue
        return ParseFailure(number, line, grammar)
    if preamble is not None and not starred:
        return ParseFailure(preamble[0], preamble[1], grammar)
    return starred


def parse_concept_lines(text: str) -> list[ParsedConceptLine] | ParseFailure:
    """Parse `*Category*: [example, example]` lines; exactly two examples each."""
    lines = _candidate_lines(text, LineGrammar.CONCEPT)
    if isinstance(lines, ParseFailure):
        return lines
    out: list[ParsedConceptLine] = []
    for number, line in lines:
        m = _STARRED.match(line)
        if not m:
            return ParseFailure(number, line, LineGrammar.CONCEPT)
        category = m.group(1).strip()
        examples = [e.strip() for e in _split_top_level_commas(m.group(2))]
        if not category or len(examples) != 2 or not all(examples):
            return ParseFailure(number, line, LineGrammar.CONCEPT)
        out.append(ParsedConceptLine(category, examples))
    return out


def parse_arrow_lines(text: str, grammar: LineGrammar) -> list[ParsedArrowLine] | ParseFailure:
    """Parse `*Name*: [Left → Right]` lines (ASCII `->` accepted)."""
    lines = _candidate_lines(text, grammar)
    if isinstance(lines, ParseFailure):
        return lines
    out: list[ParsedArrowLine] = []
    for number, line in lines:
        m = _STARRED.match(line)
        if not m:
            return ParseFailure(number, line, grammar)
        name = m.group(1).strip()
        split = _split_single_arrow(m.group(2))
        if not name or split is None:
            return ParseFailure(number, line, grammar)
        out.append(ParsedArrowLine(name, split[0], split[1]))
    return out


def parse_relationship_lines(text: str) -> list[ParsedRelationshipLine] | ParseFailure:
    parsed = parse_arrow_lines(text, LineGrammar.RELATIONSHIP)
    if isinstance(parsed, ParseFailure):
        return parsed
    return [ParsedRelationshipLine(p.name, p.left, p.right) for p in parsed]


def parse_property_lines(text: str) -> list[ParsedPropertyLine] | ParseFailure:
    # The bracket carries [Concept → Property]; the starred name restates the
    # property and is not load-bearing.
    parsed = parse_arrow_lines(text, LineGrammar.PROPERTY)
    if isinstance(parsed, ParseFailure):
        return parsed
    return [ParsedPropertyLine(p.left, p.right) for p in parsed]


def render_concept_line(line: ParsedConceptLine) -> str:
    return f"*{line.category}*: [{line.examples[0]}, {line.examples[1]}]"


def render_arrow_line(name: str, left: str, right: str) -> str:
    return f"*{name}*: [{left} → {right}]"


def render_relationship_line(line: ParsedRelationshipLine) -> str:
    return render_arrow_line(line.name, line.source, line.target)


def render_property_line(line: ParsedPropertyLine) -> str:
    return render_arrow_line(line.property_name, line.concept, line.property_name)


# --- templates ---

SYSTEM_PREAMBLE = (
    "You are an assistant that builds property-graph ontologies and knowledge "
    "graphs from technical documents, one explicitly defined step at a time. "
    "Follow the numbered instructions of the current step exactly. When a "
    "response format is given, reply using only lines in that format."
)


@dataclass
class StepTemplate:
    step_id: StepId
    system_preamble: str
    instruction_body: str


_DEFAULT_BODIES: dict[StepId, str] = {
    StepId.CONCEPT_PROPOSAL: (
        "Targeted knowledge text:\n"
        "---\n"
        "{{targeted_knowledge}}\n"
        "---\n"
        "Step: concept identification.\n"
        "1. List the concrete instances the text mentions.\n"
        "2. Group the instances into broader hierarchical categories; when the text "
        "names no suitable category, abstract one from the instances themselves.\n"
        "3. Generalize from the listed examples so each category also covers unseen "
        "instances of the same kind, and add any higher-level category needed to tie "
        "the others together.\n"
        "4. Reply with the initial category list, one line per category, in exactly "
        "this format:\n"
        "*Category Name*: [Two instances as examples]"
    ),
    StepId.CONCEPT_CONFIRMATION: (
        "Proposed concepts:\n"
        "{{proposed_concepts}}\n"
        "Please confirm the concept list: accept it, accept it with edits, or "
        "reject it with feedback."
    ),
    StepId.RELATIONSHIP_PROPOSAL: (
        "Step: relationship identification.\n"
        "The confirmed concepts are:\n"
        "{{confirmed_concepts}}\n"
        "1. Identify directed relationships that hold between pairs of the confirmed "
        "concepts; use only concepts from the list above.\n"
        "2. Reply with one relationship per line, in exactly this format:\n"
        "*Relationship Name*: [Concept1 → Concept2]"
    ),
    StepId.RELATIONSHIP_CONFIRMATION: (
        "Proposed relationships:\n"
        "{{proposed_relationships}}\n"
        "Please confirm the relationship list: accept it, accept it with edits, or "
        "reject it with feedback."
    ),
    StepId.PROPERTY_PROPOSAL: (
        "Step: concept properties.\n"
        "The confirmed concepts are:\n"
        "{{confirmed_concepts}}\n"
        "1. Re-read the targeted knowledge text from earlier in this conversation "
        "and look for additional attributes worth storing on instances of the "
        "confirmed concepts.\n"
        "2. The keys id and name are mandatory on every node; do not propose them.\n"
        "3. Reply with one property per line, in exactly this format:\n"
        "*Property Name*: [Concept Name → Property Name]"
    ),
    StepId.PROPERTY_CONFIRMATION: (
        "Proposed properties:\n"
        "{{proposed_properties}}\n"
        "Please confirm the property list: accept it, accept it with edits, or "
        "reject it with feedback."
    ),
    StepId.INSTANCE_EXTRACTION: (
        "Knowledge-graph creation, concept instances.\n"
        "Text chunk {{chunk_index}}:\n"
        "---\n"
        "{{chunk}}\n"
        "---\n"
        "Concept: {{concept}} (examples: {{concept_examples}})\n"
        "Extract every instance of this concept mentioned in the text chunk above.\n"
        "Reply with one line per instance, in exactly this format:\n"
        "*New Instance*: [{{concept}} → Instance Name]\n"
        "If the chunk mentions no instance of this concept, reply with the single "
        "word NONE."
    ),
    StepId.RELATIONSHIP_EXTRACTION: (
        "Knowledge-graph creation, relationship instances.\n"
        "Text chunk {{chunk_index}}:\n"
        "---\n"
        "{{chunk}}\n"
        "---\n"
        "Relationship: {{relationship}} (from {{source_concept}} to {{target_concept}})\n"
        "Known instances of {{source_concept}}: {{source_instances}}\n"
        "Known instances of {{target_concept}}: {{target_instances}}\n"
        "Extract every pair of instances the chunk relates through this "
        "relationship.\n"
        "Reply with one line per pair, in exactly this format:\n"
        "*{{relationship}}*: [Source Instance → Target Instance]\n"
        "If the chunk mentions no such pair, reply with the single word NONE."
    ),
    StepId.PROPERTY_EXTRACTION: (
        "Knowledge-graph creation, property values.\n"
        "Text chunk {{chunk_index}}:\n"
        "---\n"
        "{{chunk}}\n"
        "---\n"
        "Property: {{property}} on concept {{concept}}\n"
        "Known instances of {{concept}}: {{instances}}\n"
        "For each known instance whose value for this property appears in the "
        "chunk, reply with one line in exactly this format:\n"
        "*{{property}}*: [Instance Name → Property Value]\n"
        "If the chunk gives no value, reply with the single word NONE."
    ),
    StepId.TEXT_REVIEW: (
        "Knowledge-graph review, full-text pass.\n"
        "Current draft inventory:\n"
        "{{inventory}}\n"
        "Declared relationship types:\n"
        "{{relationship_types}}\n"
        "Text chunk {{chunk_index}}:\n"
        "---\n"
        "{{chunk}}\n"
        "---\n"
        "Compare the chunk against the inventory and report ONLY what is missing.\n"
        "For a missing instance, reply: *New Instance*: [Concept Name → Instance Name]\n"
        "For a missing relationship, reply: *Relationship Name*: [Source Instance → "
        "Target Instance]\n"
        "If nothing is missing, reply with the single word NONE."
    ),
    StepId.GRAPH_REVIEW: (
        "Knowledge-graph review, connectivity pass.\n"
        "The graph is not fully connected.\n"
        "Disconnected component: {{orphan_nodes}}\n"
        "Main component: {{main_nodes}}\n"
        "Declared relationship types:\n"
        "{{relationship_types}}\n"
        "Propose exactly one edge of a declared relationship type that connects "
        "the disconnected component to the main component, honoring the declared "
        "source and target concepts.\n"
        "Reply with a single line in exactly this format:\n"
        "*Relationship Name*: [Source Instance → Target Instance]"
    ),
}

DEFAULT_TEMPLATES: dict[StepId, StepTemplate] = {
    step: StepTemplate(step, SYSTEM_PREAMBLE, body) for step, body in _DEFAULT_BODIES.items()
}

_SLOT = re.compile(r"\{\{(\w+)\}\}")


def build_step_prompt(step: StepTemplate | StepId, context: dict[str, str]) -> str:
    """Fill a template's slots; raises MissingSlot on any unbound slot."""
    template = DEFAULT_TEMPLATES[step] if isinstance(step, StepId) else step

    def fill(m: re.Match) -> str:
        slot = m.group(1)
        if slot not in context:
            raise MissingSlot(f"template {template.step_id.value!r} needs slot {slot!r}")
        return str(context[slot])

    return _SLOT.sub(fill, template.instruction_body)


@dataclass
class TemplateSet:
    """Shipped templates plus optional per-step overrides from a directory.

    An override file is named `<step-id>.txt` (e.g. `concept-proposal.txt`)
    and replaces the instruction body; `system.txt` replaces the preamble.
    """

    templates: dict[StepId, StepTemplate] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    system_preamble: str = SYSTEM_PREAMBLE

    @classmethod
    def load(cls, override_dir: str | Path | None = None) -> TemplateSet:
        ts = cls()
        if override_dir is None:
            return ts
        root = Path(override_dir)
        system_file = root / "system.txt"
        if system_file.exists():
            ts.system_preamble = system_file.read_text(encoding="utf-8")
        for step in StepId:
            f = root / f"{step.value}.txt"
            if f.exists():
                ts.templates[step] = StepTemplate(
                    step, ts.system_preamble, f.read_text(encoding="utf-8")
                )
        return ts

    def prompt(self, step: StepId, context: dict[str, str]) -> str:
        return build_step_prompt(self.templates[step], context)


# --- corrective loop ---

MAX_ROUNDS = 3


def corrective_reprompt(failure: ParseFailure, conv: Conversation) -> Conversation:
    """Append a user message quoting the offending line and the exact grammar."""
    conv.append(
        "user",
        (
            f"Line {failure.line_number} of your reply could not be parsed: "
            f"{failure.line_text.strip()!r}\n"
            f"Reply again with one item per line, each in exactly this format:\n"
            f"{failure.expected_grammar.value}\n"
            f"Output nothing except lines in that format."
        ),
    )
    return conv


def complete_with_grammar(
    client: ChatClient,
    conv: Conversation,
    parse,
    params: CompletionParams = DEFAULT_PARAMS,
    max_rounds: int = MAX_ROUNDS,
):
    """Run one step's completion with bounded corrective re-prompting.

    Each round is one completion plus a parse. The assistant reply is always
    appended to the conversation; a failed round appends the corrective user
    message before the next attempt. After `max_rounds` failed rounds the step
    raises RetriesExhausted.
    """
    failure: ParseFailure | None = None
    for round_number in range(1, max_rounds + 1):
        reply = client.complete(conv, params)
        conv.append("assistant", reply.content)
        parsed = parse(reply.content)
        if not isinstance(parsed, ParseFailure):
            return parsed
        failure = parsed
        if round_number < max_rounds:
            corrective_reprompt(failure, conv)
    raise RetriesExhausted(max_rounds, failure)
