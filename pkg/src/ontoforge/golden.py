"""Regenerates the bundled case-study fixtures.

The scripted responses below encode the equipment-reliability case study:
five concepts, four relationships, one free-text property, nine instances,
eight edges. Running this module replays the full pipeline with those
responses, records the conversation digests, and rewrites every bundled
asset so the replay path stays byte-identical with the committed goldens.

    python -m ontoforge.golden
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from .extraction import start_extraction
from .llm import RecordClient, ScriptedClient
from .prompts import TemplateSet
from .service import ServiceConfig, SessionService, run_scripted

FIXTURES_DIR = Path(__file__).parent / "fixtures"

CONCEPT_PROPOSAL = """\
*Equipment System*: [Cluster Tool, Wafer Track System]
*Equipment States*: [Productive State, Scheduled Downtime State]
*Sub-States*: [SDT preventive maintenance, SDT setup]
*Activities*: [Regular production, Rework]
*Metrics*: [Equipment-Dependent Metrics, Equipment-Independent Metrics]
"""

RELATIONSHIP_PROPOSAL = """\
*Has State*: [Equipment System → Equipment States]
*Has Sub-State*: [Equipment States → Sub-States]
*Has Activity*: [Equipment States → Activities]
*Has Metric*: [Equipment System → Metrics]
"""

PROPERTY_PROPOSAL = """\
*brief explanation*: [Equipment System → brief explanation]
*brief explanation*: [Equipment States → brief explanation]
*brief explanation*: [Sub-States → brief explanation]
*brief explanation*: [Activities → brief explanation]
*brief explanation*: [Metrics → brief explanation]
"""

INSTANCES = {
    "Equipment System": """\
*New Instance*: [Equipment System → Equipment System]
""",
    "Equipment States": """\
*New Instance*: [Equipment States → Productive State (PRD)]
*New Instance*: [Equipment States → Scheduled Downtime State (SDT)]
""",
    "Sub-States": """\
*New Instance*: [Sub-States → SDT preventive maintenance]
*New Instance*: [Sub-States → SDT setup]
""",
    "Activities": """\
*New Instance*: [Activities → Regular production]
*New Instance*: [Activities → Rework]
""",
    "Metrics": """\
*New Instance*: [Metrics → Equipment-Dependent Metrics]
*New Instance*: [Metrics → Equipment-Independent Metrics]
""",
}

EDGES = {
    "Has State": """\
*Has State*: [Equipment System → Productive State (PRD)]
*Has State*: [Equipment System → Scheduled Downtime State (SDT)]
""",
    "Has Sub-State": """\
*Has Sub-State*: [Scheduled Downtime State (SDT) → SDT preventive maintenance]
*Has Sub-State*: [Scheduled Downtime State (SDT) → SDT setup]
""",
    "Has Activity": """\
*Has Activity*: [Productive State (PRD) → Regular production]
*Has Activity*: [Productive State (PRD) → Rework]
""",
    "Has Metric": """\
*Has Metric*: [Equipment System → Equipment-Dependent Metrics]
*Has Metric*: [Equipment System → Equipment-Independent Metrics]
""",
}

VALUES = {
    "Equipment System": """\
*briefExplanation*: [Equipment System → Central node containing all equipment states, activities, and metrics.]
""",
    "Equipment States": """\
*briefExplanation*: [Productive State (PRD) → Time when the equipment is performing its intended function.]
*briefExplanation*: [Scheduled Downtime State (SDT) → Time when the equipment is unavailable due to planned downtime events.]
""",
    "Sub-States": """\
*briefExplanation*: [SDT preventive maintenance → Planned maintenance performed to retain the equipment in working condition.]
*briefExplanation*: [SDT setup → Planned reconfiguration of the equipment for a new product or process.]
""",
    "Activities": """\
*briefExplanation*: [Regular production → Processing of product units according to the agreed specification.]
*briefExplanation*: [Rework → Reprocessing of product units that failed to meet specification.]
""",
    "Metrics": """\
*briefExplanation*: [Equipment-Dependent Metrics → Reliability measures determined solely by equipment behavior.]
*briefExplanation*: [Equipment-Independent Metrics → Measures influenced by factors outside the equipment itself.]
""",
}

TEXT_REVIEW = "NONE"

MALFORMED_CONCEPTS = "Equipment states include PRD and SDT."


def scripted_responses() -> list[str]:
    """Full response script in pipeline call order, one chunk of text."""
    out = [CONCEPT_PROPOSAL, RELATIONSHIP_PROPOSAL, PROPERTY_PROPOSAL]
    out += [INSTANCES[c] for c in
            ("Equipment System", "Equipment States", "Sub-States", "Activities", "Metrics")]
    out += [EDGES[r] for r in ("Has State", "Has Sub-State", "Has Activity", "Has Metric")]
    out += [VALUES[c] for c in
            ("Equipment System", "Equipment States", "Sub-States", "Activities", "Metrics")]
    out.append(TEXT_REVIEW)
    return out


def regenerate(target_dir: Path = FIXTURES_DIR) -> dict[str, str]:
    target_dir.mkdir(parents=True, exist_ok=True)
    tk = (target_dir / "tk.txt").read_text(encoding="utf-8")
    tc = (target_dir / "tc.txt").read_text(encoding="utf-8")
    decisions = json.loads((target_dir / "decisions.json").read_text(encoding="utf-8"))

    fixture_path = target_dir / "fixture.json"
    with tempfile.TemporaryDirectory(prefix="ontoforge-golden-") as data_dir:
        config = ServiceConfig(backend="record", data_dir=data_dir)
        recorder = RecordClient(ScriptedClient(scripted_responses()))
        service = SessionService(config, client_factory=lambda: recorder)
        session_id, artifacts = run_scripted(service, tk, tc, decisions)
        service.save_fixture(session_id, fixture_path)

    (target_dir / "ontology.golden.json").write_text(artifacts["ontology"], encoding="utf-8")
    (target_dir / "kg.golden.json").write_text(artifacts["kg"], encoding="utf-8")
    (target_dir / "kg.golden.cypher").write_text(artifacts["cypher"], encoding="utf-8")
    _write_corrective_fixtures(target_dir, tk)
    return artifacts


def _write_corrective_fixtures(target_dir: Path, tk: str):
    """Record the two malformed-output scenarios used by the retry tests."""
    templates = TemplateSet.load(None)

    recorder = RecordClient(ScriptedClient([MALFORMED_CONCEPTS, CONCEPT_PROPOSAL]))
    session = start_extraction(tk, recorder, templates)
    session.advance()
    recorder.save(target_dir / "corrective_once.fixture.json")

    recorder = RecordClient(ScriptedClient([MALFORMED_CONCEPTS] * 3))
    session = start_extraction(tk, recorder, templates)
    try:
        session.advance()
    except Exception:
        pass
    recorder.save(target_dir / "corrective_always.fixture.json")


def main():
    artifacts = regenerate()
    kg = json.loads(artifacts["kg"])
    print(f"fixtures written to {FIXTURES_DIR}")
    print(f"graph: {len(kg['nodes'])} nodes, {len(kg['edges'])} edges")


if __name__ == "__main__":
    main()
