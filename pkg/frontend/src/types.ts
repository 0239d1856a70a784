// Server-owned shapes, mirrored as-is. The UI renders from these and never
// derives pipeline state on its own.

export interface ConceptDraft {
  name: string;
  examples: string[];
  description?: string;
}

export interface RelationshipDraft {
  name: string;
  source: string;
  target: string;
}

export interface PropertyDraft {
  concept: string;
  propertyName: string;
}

export interface FixEdge {
  relationship: string;
  sourceId: string;
  targetId: string;
}

export interface ExtractionView {
  stage: string;
  proposedConcepts: ConceptDraft[];
  confirmedConcepts: ConceptDraft[];
  proposedRelationships: RelationshipDraft[];
  confirmedRelationships: RelationshipDraft[];
  proposedProperties: PropertyDraft[];
  confirmedProperties: PropertyDraft[];
}

export interface GenerationView {
  phase: string;
  chunks: number;
  nodes: number;
  edges: number;
  pendingFixEdges: FixEdge[];
  connectivityWaived: boolean;
  llmCalls: number;
  stepFailures: { step: string; unit: string }[];
}

export interface SessionSnapshot {
  id: string;
  stage: string;
  pendingQuestion: string | null;
  artifacts: { ontology: boolean; kg: boolean; cypher: boolean };
  lastSeq: number;
  extraction: ExtractionView | null;
  generation: GenerationView | null;
}

export interface ServerEvent {
  seq: number;
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface MessageResult {
  reply: string;
  session: SessionSnapshot;
}

export type DecisionKind = "accept" | "acceptWithEdits" | "rejectWithFeedback";

export interface Decision {
  kind: DecisionKind;
  feedback?: string;
  edits?: unknown[];
}

export type ArtifactName = "ontology" | "kg" | "cypher";

// KG artifact document, parsed from the kg.json download.
export interface KgNodeDoc {
  id: string;
  concept: string;
  properties: Record<string, string>;
}

export interface KgDoc {
  nodes: KgNodeDoc[];
  edges: FixEdge[];
}
