"""Exception types shared across the pipeline.

Validation problems are usually reported as data (see ValidationReport in
:mod:`ontoforge.model`); exceptions here mark contract violations, transport
failures, and state-machine misuse.
"""

from __future__ import annotations


class OntoforgeError(Exception):
    """Base class for every error raised by this package."""


# --- data model ---

class EmptyName(OntoforgeError):
    """A name normalized to the empty string."""


class DanglingEdge(OntoforgeError):
    """An edge references a node id that does not exist."""


class InvalidOntology(OntoforgeError):
    """An ontology failed validation where a valid one was required."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"invalid ontology: {report.summary()}")


class InvalidGraph(OntoforgeError):
    """A knowledge graph failed validation where a valid one was required."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"invalid graph: {report.summary()}")


# --- llm client ---

class CompletionTimeout(OntoforgeError):
    """The completion request did not finish within the configured timeout."""


class RateLimited(OntoforgeError):
    """The provider kept rate-limiting after the retry budget was spent."""


class TransportFailure(OntoforgeError):
    """The completion request failed at the HTTP/network level."""


class FixtureMiss(OntoforgeError):
    """Replay could not serve a completion from the fixture."""

    def __init__(self, expected_digest: str | None, got_digest: str):
        self.expected_digest = expected_digest
        self.got_digest = got_digest
        if expected_digest is None:
            msg = f"fixture exhausted; no entry left for conversation digest {got_digest}"
        else:
            msg = f"fixture digest mismatch: expected {expected_digest}, got {got_digest}"
        super().__init__(msg)


# --- prompt protocol ---

class MissingSlot(OntoforgeError):
    """A template slot was not provided."""


class RetriesExhausted(OntoforgeError):
    """A step kept producing unparseable output past the corrective budget."""

    def __init__(self, rounds: int, last_failure=None):
        self.rounds = rounds
        self.last_failure = last_failure
        super().__init__(f"step failed after {rounds} rounds of unparseable output")


# --- extraction / generation state machines ---

class EmptyInput(OntoforgeError):
    """Targeted knowledge or comprehensive text was empty."""


class StageError(OntoforgeError):
    """An operation was called in a stage/phase that does not allow it."""


class EditValidationFailed(OntoforgeError):
    """User edits conflict with earlier confirmations."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"edits rejected: {report.summary()}")


class StepFailed(OntoforgeError):
    """A pipeline step gave up after its retry budget."""

    def __init__(self, step: str, cause: Exception | None = None):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step!r} failed" + (f": {cause}" if cause else ""))


class BadParams(OntoforgeError):
    """Chunking parameters out of range."""


class EmptyText(OntoforgeError):
    """Chunking was asked to split an empty text."""


class NotFinalized(OntoforgeError):
    """The generation session has not reached its final phase."""


class NoValidFixProposed(OntoforgeError):
    """No ontology-conformant connectivity fix could be collected."""


# --- cypher ---

class SubsetViolation(OntoforgeError):
    """Input text falls outside the emitted Cypher subset."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at offset {position})")


class AuthFailed(OntoforgeError):
    """Database rejected the credentials."""


class Unreachable(OntoforgeError):
    """Database endpoint could not be reached; nothing was sent."""


class ServerError(OntoforgeError):
    """Database reported a failure for one upload batch."""

    def __init__(self, batch_index: int, detail: str = ""):
        self.batch_index = batch_index
        super().__init__(f"batch {batch_index} failed" + (f": {detail}" if detail else ""))


# --- session service / cli ---

class UnknownSession(OntoforgeError):
    """No session with the given id."""


class SessionBusy(OntoforgeError):
    """Another mutating call is in flight for this session."""


class NotReady(OntoforgeError):
    """The session is not in a state where this operation applies."""


class NotAvailable(OntoforgeError):
    """The requested artifact has not been produced yet."""

    def __init__(self, artifact: str):
        self.artifact = artifact
        super().__init__(f"artifact {artifact!r} not available yet")


class BadConfig(OntoforgeError):
    """Service configuration is incomplete or inconsistent."""


class FixtureNotFound(OntoforgeError):
    """Replay/record fixture path does not exist."""


class DecisionsExhausted(OntoforgeError):
    """A scripted run needed a decision but the script had no more."""
