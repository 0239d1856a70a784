// Stage-specific controls. Everything here renders from the latest server
// snapshot; clicking a control sends exactly one documented HTTP call back.
// Edits are staged in the DOM and submitted as a single decision.

import { isStale, ViewState } from "./store.js";
import {
  ArtifactName,
  ConceptDraft,
  Decision,
  FixEdge,
  PropertyDraft,
  RelationshipDraft,
} from "./types.js";

export interface PanelActions {
  sendText(text: string): void;
  sendDecision(decision: Decision): void;
  advance(): void;
  download(name: ArtifactName): void;
}

const AWAIT_STAGES = new Set(["AwaitTargetedKnowledge", "AwaitComprehensiveText"]);
const CONFIRM_STAGES = new Set(["ConceptConfirm", "RelationshipConfirm", "PropertyConfirm"]);

export function renderStagePanel(
  container: HTMLElement,
  state: ViewState,
  actions: PanelActions,
): void {
  container.innerHTML = "";
  container.classList.add("stage-panel");

  if (!state.snapshot) {
    const note = document.createElement("p");
    note.textContent = "Connecting to the session...";
    container.appendChild(note);
    return;
  }

  if (isStale(state)) {
    const banner = document.createElement("div");
    banner.className = "stale-banner";
    banner.textContent = "Catching up with the server, the view below may lag behind.";
    container.appendChild(banner);
  }
  if (state.error) {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent = state.error;
    container.appendChild(banner);
  }
  if (state.progress) {
    const note = document.createElement("div");
    note.className = "progress-note";
    note.textContent = state.progress;
    container.appendChild(note);
  }

  const fieldset = document.createElement("fieldset");
  fieldset.className = "stage-controls";
  fieldset.disabled = state.busy;
  container.appendChild(fieldset);

  const stage = state.snapshot.stage;
  const heading = document.createElement("h2");
  heading.className = "stage-name";
  heading.textContent = stage;
  fieldset.appendChild(heading);

  if (state.snapshot.pendingQuestion && stage !== "FixReview") {
    const q = document.createElement("p");
    q.className = "pending-question";
    q.textContent = state.snapshot.pendingQuestion;
    fieldset.appendChild(q);
  }

  if (AWAIT_STAGES.has(stage)) {
    renderTextInput(fieldset, stage, actions);
  } else if (CONFIRM_STAGES.has(stage)) {
    renderConfirm(fieldset, stage, state, actions);
    renderFreeText(fieldset, actions);
  } else if (stage === "FixReview") {
    renderFixReview(fieldset, state, actions);
    renderFreeText(fieldset, actions);
  } else if (stage === "Complete") {
    renderComplete(fieldset, actions);
    renderFreeText(fieldset, actions);
  } else {
    renderAdvance(fieldset, stage, actions);
    renderFreeText(fieldset, actions);
  }
}

function renderTextInput(parent: HTMLElement, stage: string, actions: PanelActions): void {
  const area = document.createElement("textarea");
  area.className = "stage-text";
  area.rows = stage === "AwaitComprehensiveText" ? 10 : 5;
  area.placeholder =
    stage === "AwaitTargetedKnowledge"
      ? "Describe the knowledge the graph should capture..."
      : "Paste the full text to turn into a graph...";
  const send = button("Send", "send", () => {
    if (area.value.trim()) actions.sendText(area.value);
  });
  parent.appendChild(area);
  parent.appendChild(send);
}

function renderAdvance(parent: HTMLElement, stage: string, actions: PanelActions): void {
  const note = document.createElement("p");
  note.className = "advance-note";
  note.textContent = `Ready to continue from ${stage}.`;
  parent.appendChild(note);
  parent.appendChild(button("Continue", "advance", () => actions.advance()));
}

// --- confirmation stages ---

function renderConfirm(
  parent: HTMLElement,
  stage: string,
  state: ViewState,
  actions: PanelActions,
): void {
  const extraction = state.snapshot?.extraction;
  if (!extraction) return;

  const list = document.createElement("div");
  list.className = "proposal-list";
  parent.appendChild(list);

  let collect: () => unknown[];
  let original: unknown[];
  if (stage === "ConceptConfirm") {
    original = extraction.proposedConcepts as unknown[];
    for (const c of extraction.proposedConcepts) list.appendChild(conceptRow(c));
    collect = () => readConceptRows(list);
  } else if (stage === "RelationshipConfirm") {
    original = extraction.proposedRelationships as unknown[];
    for (const r of extraction.proposedRelationships) list.appendChild(relationshipRow(r));
    collect = () => readRelationshipRows(list);
  } else {
    original = extraction.proposedProperties as unknown[];
    for (const p of extraction.proposedProperties) list.appendChild(propertyRow(p));
    collect = () => readPropertyRows(list);
  }

  const bar = document.createElement("div");
  bar.className = "decision-bar";
  bar.appendChild(
    button("Accept", "accept", () => {
      const edits = collect();
      if (JSON.stringify(edits) === JSON.stringify(original)) {
        actions.sendDecision({ kind: "accept" });
      } else {
        actions.sendDecision({ kind: "acceptWithEdits", edits });
      }
    }),
  );
  const feedback = document.createElement("input");
  feedback.type = "text";
  feedback.className = "feedback-input";
  feedback.placeholder = "What should change?";
  bar.appendChild(feedback);
  bar.appendChild(
    button("Reject with feedback", "reject", () => {
      if (feedback.value.trim()) {
        actions.sendDecision({ kind: "rejectWithFeedback", feedback: feedback.value });
      }
    }),
  );
  parent.appendChild(bar);
}

function conceptRow(draft: ConceptDraft): HTMLElement {
  const row = rowShell();
  row.appendChild(includeBox());
  row.appendChild(textField("row-name", "name", draft.name));
  row.appendChild(textField("row-examples", "examples", draft.examples.join(", ")));
  row.appendChild(textField("row-description", "description", draft.description ?? ""));
  return row;
}

function relationshipRow(draft: RelationshipDraft): HTMLElement {
  const row = rowShell();
  row.appendChild(includeBox());
  row.appendChild(textField("row-name", "name", draft.name));
  row.appendChild(textField("row-source", "source", draft.source));
  row.appendChild(textField("row-target", "target", draft.target));
  return row;
}

function propertyRow(draft: PropertyDraft): HTMLElement {
  const row = rowShell();
  row.appendChild(includeBox());
  row.appendChild(textField("row-concept", "concept", draft.concept));
  row.appendChild(textField("row-property", "property", draft.propertyName));
  return row;
}

export function readConceptRows(list: HTMLElement): ConceptDraft[] {
  const drafts: ConceptDraft[] = [];
  for (const row of includedRows(list)) {
    const draft: ConceptDraft = {
      name: fieldValue(row, "row-name"),
      examples: fieldValue(row, "row-examples")
        .split(",")
        .map((s) => s.trim())
        .filter((s) => s.length > 0),
    };
    const description = fieldValue(row, "row-description");
    if (description) draft.description = description;
    drafts.push(draft);
  }
  return drafts;
}

export function readRelationshipRows(list: HTMLElement): RelationshipDraft[] {
  return includedRows(list).map((row) => ({
    name: fieldValue(row, "row-name"),
    source: fieldValue(row, "row-source"),
    target: fieldValue(row, "row-target"),
  }));
}

export function readPropertyRows(list: HTMLElement): PropertyDraft[] {
  return includedRows(list).map((row) => ({
    concept: fieldValue(row, "row-concept"),
    propertyName: fieldValue(row, "row-property"),
  }));
}

// --- connectivity repair ---

function renderFixReview(parent: HTMLElement, state: ViewState, actions: PanelActions): void {
  const edges = state.snapshot?.generation?.pendingFixEdges ?? [];
  const intro = document.createElement("p");
  intro.className = "pending-question";
  intro.textContent =
    "The graph is disconnected. Review the proposed repair edges; " +
    "unchecking all of them keeps the graph disconnected.";
  parent.appendChild(intro);

  const list = document.createElement("div");
  list.className = "fix-list";
  parent.appendChild(list);
  for (const edge of edges) {
    const row = rowShell();
    row.classList.add("fix-edge");
    row.appendChild(includeBox());
    const label = document.createElement("span");
    label.className = "fix-label";
    label.textContent = `${edge.sourceId} → ${edge.targetId} (${edge.relationship})`;
    row.appendChild(label);
    row.dataset.relationship = edge.relationship;
    row.dataset.sourceId = edge.sourceId;
    row.dataset.targetId = edge.targetId;
    list.appendChild(row);
  }

  const bar = document.createElement("div");
  bar.className = "decision-bar";
  bar.appendChild(
    button("Apply selected repairs", "accept", () => {
      const selected = readFixRows(list);
      if (selected.length === edges.length) {
        actions.sendDecision({ kind: "accept" });
      } else {
        actions.sendDecision({ kind: "acceptWithEdits", edits: selected });
      }
    }),
  );
  const waiver = button("Leave disconnected", "waive", () => {
    actions.sendDecision({ kind: "acceptWithEdits", edits: [] });
  });
  waiver.title = "Finish without the repair edges; the graph stays disconnected.";
  bar.appendChild(waiver);
  const feedback = document.createElement("input");
  feedback.type = "text";
  feedback.className = "feedback-input";
  feedback.placeholder = "Ask for different repairs...";
  bar.appendChild(feedback);
  bar.appendChild(
    button("Reject with feedback", "reject", () => {
      if (feedback.value.trim()) {
        actions.sendDecision({ kind: "rejectWithFeedback", feedback: feedback.value });
      }
    }),
  );
  parent.appendChild(bar);
}

export function readFixRows(list: HTMLElement): FixEdge[] {
  const rows = Array.from(list.querySelectorAll<HTMLElement>(".fix-edge"));
  return rows
    .filter((row) => row.querySelector<HTMLInputElement>(".row-include")?.checked)
    .map((row) => ({
      relationship: row.dataset.relationship ?? "",
      sourceId: row.dataset.sourceId ?? "",
      targetId: row.dataset.targetId ?? "",
    }));
}

// --- completion ---

function renderComplete(parent: HTMLElement, actions: PanelActions): void {
  const note = document.createElement("p");
  note.className = "complete-note";
  note.textContent = "The knowledge graph is finished. Download the artifacts:";
  parent.appendChild(note);
  const bar = document.createElement("div");
  bar.className = "download-bar";
  const names: ArtifactName[] = ["ontology", "kg", "cypher"];
  const labels: Record<ArtifactName, string> = {
    ontology: "ontology.json",
    kg: "kg.json",
    cypher: "kg.cypher",
  };
  for (const name of names) {
    bar.appendChild(button(labels[name], `download-${name}`, () => actions.download(name)));
  }
  parent.appendChild(bar);
}

// --- shared helpers ---

function renderFreeText(parent: HTMLElement, actions: PanelActions): void {
  const bar = document.createElement("div");
  bar.className = "freetext-bar";
  const input = document.createElement("input");
  input.type = "text";
  input.className = "freetext-input";
  input.placeholder = "Message the assistant...";
  const send = button("Ask", "freetext", () => {
    if (input.value.trim()) actions.sendText(input.value);
  });
  bar.appendChild(input);
  bar.appendChild(send);
  parent.appendChild(bar);
}

function button(label: string, action: string, onClick: () => void): HTMLButtonElement {
  const b = document.createElement("button");
  b.type = "button";
  b.textContent = label;
  b.dataset.action = action;
  b.addEventListener("click", onClick);
  return b;
}

function rowShell(): HTMLElement {
  const row = document.createElement("div");
  row.className = "proposal-row";
  return row;
}

function includeBox(): HTMLInputElement {
  const box = document.createElement("input");
  box.type = "checkbox";
  box.className = "row-include";
  box.checked = true;
  box.title = "Include this row in the accepted set";
  return box;
}

function textField(cls: string, label: string, value: string): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "field";
  const caption = document.createElement("span");
  caption.textContent = label;
  const input = document.createElement("input");
  input.type = "text";
  input.className = cls;
  input.value = value;
  wrap.appendChild(caption);
  wrap.appendChild(input);
  return wrap;
}

function includedRows(list: HTMLElement): HTMLElement[] {
  return Array.from(list.querySelectorAll<HTMLElement>(".proposal-row")).filter(
    (row) => row.querySelector<HTMLInputElement>(".row-include")?.checked,
  );
}

function fieldValue(row: HTMLElement, cls: string): string {
  return row.querySelector<HTMLInputElement>(`.${cls}`)?.value.trim() ?? "";
}
