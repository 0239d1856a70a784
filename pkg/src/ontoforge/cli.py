"""Command-line entry points.

`replay` drives the whole pipeline deterministically from a fixture and a
decision script; `run` is the interactive terminal flow; the rest are
single-purpose utilities around validation, emission, and serving.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from . import cypher
from .errors import (
    DecisionsExhausted,
    FixtureMiss,
    OntoforgeError,
    RetriesExhausted,
    StepFailed,
)
from .model import (
    graph_from_json,
    ontology_from_json,
    validate_ontology,
)
from .service import ServiceConfig, SessionService, run_scripted

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def _fail(message: str, code: int):
    click.echo(message, err=True)
    sys.exit(code)


def _load_config(path: str | None, **overrides) -> ServiceConfig:
    if path:
        cfg = ServiceConfig.from_file(path)
    else:
        cfg = ServiceConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.backend == "replay" and not cfg.fixture:
        cfg.fixture = str(FIXTURES_DIR / "fixture.json")
    cfg.validate()
    return cfg


def _write_artifacts(out_dir: str, artifacts: dict[str, str]):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {"ontology": "ontology.json", "kg": "kg.json", "cypher": "kg.cypher"}
    for key, payload in artifacts.items():
        target = out / names[key]
        target.write_text(payload, encoding="utf-8")
        click.echo(f"wrote {target}")


@click.group()
def main():
    """Ontology extraction and knowledge-graph generation pipeline."""


@main.command()
@click.option("--fixture", type=click.Path(), default=None,
              help="Recorded fixture file (defaults to the bundled case study).")
@click.option("--decisions", type=click.Path(), default=None,
              help="JSON list of decisions applied at each confirmation.")
@click.option("--targeted-knowledge", "targeted_knowledge", type=click.Path(), default=None)
@click.option("--text", type=click.Path(), default=None,
              help="Comprehensive text file.")
@click.option("--out", type=click.Path(), default=".", help="Artifact output directory.")
@click.option("--config", "config_path", type=click.Path(), default=None)
def replay(fixture, decisions, targeted_knowledge, text, out, config_path):
    """Replay a recorded session end to end and write the three artifacts."""
    fixture = fixture or str(FIXTURES_DIR / "fixture.json")
    decisions = decisions or str(FIXTURES_DIR / "decisions.json")
    targeted_knowledge = targeted_knowledge or str(FIXTURES_DIR / "tk.txt")
    text = text or str(FIXTURES_DIR / "tc.txt")
    try:
        decision_list = json.loads(Path(decisions).read_text(encoding="utf-8"))
        tk = Path(targeted_knowledge).read_text(encoding="utf-8")
        tc = Path(text).read_text(encoding="utf-8")
    except (OSError, ValueError) as exc:
        _fail(f"cannot read inputs: {exc}", 1)
    with tempfile.TemporaryDirectory(prefix="ontoforge-replay-") as data_dir:
        cfg = _load_config(config_path, backend="replay", fixture=fixture, data_dir=data_dir)
        service = SessionService(cfg)
        try:
            _, artifacts = run_scripted(service, tk, tc, decision_list)
        except FixtureMiss as exc:
            _fail(f"fixture desynchronized: {exc}", 2)
        except (StepFailed, RetriesExhausted, DecisionsExhausted) as exc:
            _fail(f"pipeline step failed: {exc}", 3)
        except OntoforgeError as exc:
            _fail(str(exc), 1)
    _write_artifacts(out, artifacts)


@main.command("validate-ontology")
@click.argument("path", type=click.Path())
def validate_ontology_cmd(path):
    """Validate an ontology file; exit 0 only when it is valid."""
    try:
        ontology = ontology_from_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail(f"cannot read ontology: {exc}", 2)
    report = validate_ontology(ontology)
    if report.valid:
        click.echo("valid")
        return
    for violation in report.violations:
        click.echo(f"{violation.code}({violation.subject}): {violation.message}")
    sys.exit(1)


@main.command("emit-cypher")
@click.option("--kg", "kg_path", type=click.Path(), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True)
def emit_cypher_cmd(kg_path, ontology_path, out):
    """Emit the MERGE script for a knowledge graph and verify it round-trips."""
    try:
        kg = graph_from_json(Path(kg_path).read_text(encoding="utf-8"))
        ontology = ontology_from_json(Path(ontology_path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail(f"cannot read inputs: {exc}", 2)
    try:
        script = cypher.emit_merge_script(kg, ontology)
        if not cypher.verify_roundtrip(kg, ontology):
            _fail("script does not round-trip to the source graph", 1)
    except OntoforgeError as exc:
        _fail(str(exc), 1)
    Path(out).write_text(script.text, encoding="utf-8")
    click.echo(f"wrote {out} ({len(script.statements)} statements)")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--port", type=int, default=8567)
@click.option("--host", default="127.0.0.1")
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory of web UI assets to serve at /.")
def serve(config_path, port, host, static_dir):
    """Serve the HTTP API (and optionally the web UI)."""
    import uvicorn

    from .api import create_app

    cfg = _load_config(config_path)
    if static_dir is None and Path("frontend/dist").is_dir():
        static_dir = "frontend/dist"
    service = SessionService(cfg)
    app = create_app(service, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--targeted-knowledge", "targeted_knowledge", type=click.Path(), default=None)
@click.option("--text", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=".")
def run(config_path, targeted_knowledge, text, out):
    """Interactive terminal session against the configured backend."""
    cfg = _load_config(config_path)
    service = SessionService(cfg)
    snapshot = service.create_session()
    session_id = snapshot["id"]
    click.echo(f"session {session_id}")

    def send(kind, payload):
        result = service.handle_message(session_id, kind, payload)
        click.echo(result["reply"])

    if targeted_knowledge:
        send("freeText", Path(targeted_knowledge).read_text(encoding="utf-8"))
    while True:
        snapshot = service.get_session(session_id)
        stage = snapshot["stage"]
        if stage == "Complete":
            _write_artifacts(out, service.export_artifacts(session_id))
            return
        if stage == "AwaitTargetedKnowledge":
            send("freeText", click.prompt("targeted knowledge"))
        elif stage == "AwaitComprehensiveText":
            if text:
                send("freeText", Path(text).read_text(encoding="utf-8"))
                text = None
            else:
                send("freeText", click.prompt("comprehensive text file", type=click.Path()))
        elif stage in ("ConceptConfirm", "RelationshipConfirm", "PropertyConfirm", "FixReview"):
            click.echo(snapshot["pendingQuestion"])
            raw = click.prompt("decision [accept | reject <feedback> | edits <json> | chat]")
            if raw.strip() == "accept":
                send("decision", json.dumps({"kind": "accept"}))
            elif raw.startswith("reject "):
                send("decision", json.dumps(
                    {"kind": "rejectWithFeedback", "feedback": raw[len("reject "):]}))
            elif raw.startswith("edits "):
                send("decision", json.dumps(
                    {"kind": "acceptWithEdits", "edits": json.loads(raw[len("edits "):])}))
            else:
                send("freeText", raw)
        else:
            click.echo(f"advancing from {stage}...")
            service.advance(session_id)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--fixture", "fixture_out", type=click.Path(), required=True,
              help="Where to write the recorded fixture.")
@click.option("--decisions", type=click.Path(), required=True)
@click.option("--targeted-knowledge", "targeted_knowledge", type=click.Path(), required=True)
@click.option("--text", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=".")
def record(config_path, fixture_out, decisions, targeted_knowledge, text, out):
    """Run against the live backend and record a replayable fixture."""
    cfg = _load_config(config_path, backend="record")
    try:
        decision_list = json.loads(Path(decisions).read_text(encoding="utf-8"))
        tk = Path(targeted_knowledge).read_text(encoding="utf-8")
        tc = Path(text).read_text(encoding="utf-8")
    except (OSError, ValueError) as exc:
        _fail(f"cannot read inputs: {exc}", 1)
    service = SessionService(cfg)
    try:
        session_id, artifacts = run_scripted(service, tk, tc, decision_list)
    except OntoforgeError as exc:
        _fail(str(exc), 1)
    service.save_fixture(session_id, fixture_out)
    click.echo(f"wrote {fixture_out}")
    _write_artifacts(out, artifacts)


if __name__ == "__main__":
    main()
