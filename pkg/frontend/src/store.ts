import type { ArtifactName, ServerEvent, SessionSnapshot } from "./types.js";

export interface ChatEntry {
  role: "user" | "assistant" | "system";
  text: string;
}

export interface ViewState {
  sessionId: string | null;
  snapshot: SessionSnapshot | null;
  transcript: ChatEntry[];
  cursor: number;
  busy: boolean;
  error: string | null;
  artifacts: Partial<Record<ArtifactName, string>>;
  progress: string | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    snapshot: null,
    transcript: [],
    cursor: 0,
    busy: false,
    error: null,
    artifacts: {},
    progress: null,
  };
}

type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = initialState();
  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  set(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }
}

// The transcript is rebuilt strictly from server events so that everything
// shown corresponds to something the server logged.
export function applyEvent(store: Store, event: ServerEvent): void {
  const state = store.get();
  if (event.seq <= state.cursor) return;
  const patch: Partial<ViewState> = { cursor: event.seq };
  const transcript = state.transcript.slice();
  switch (event.kind) {
    case "userMessage": {
      const text = String(event.payload.text ?? "");
      transcript.push({ role: "user", text: abbreviate(text) });
      patch.transcript = transcript;
      break;
    }
    case "reply": {
      transcript.push({ role: "assistant", text: String(event.payload.text ?? "") });
      patch.transcript = transcript;
      patch.progress = null;
      break;
    }
    case "stage": {
      const rounds = event.payload.correctiveRounds;
      if (typeof rounds === "number" && rounds > 0) {
        transcript.push({
          role: "system",
          text: `Output needed ${rounds} corrective round(s) before it parsed.`,
        });
        patch.transcript = transcript;
      }
      break;
    }
    case "progress": {
      patch.progress = `Working: ${String(event.payload.unit ?? "...")}`;
      break;
    }
    case "fixPause": {
      transcript.push({
        role: "system",
        text: "The generated graph is disconnected; review the proposed fix edges below.",
      });
      patch.transcript = transcript;
      patch.progress = null;
      break;
    }
    case "finalized": {
      const text =
        event.payload.artifact === "kg"
          ? `Knowledge graph finalized: ${event.payload.nodes} nodes, ${event.payload.edges} edges.`
          : "Ontology finalized.";
      transcript.push({ role: "system", text });
      patch.transcript = transcript;
      patch.progress = null;
      break;
    }
    default:
      break;
  }
  store.set(patch);
}

// The UI lags when the snapshot's event counter is ahead of what the event
// loop has seen; panels show a catching-up banner until the poll closes in.
export function isStale(state: ViewState): boolean {
  return state.snapshot !== null && state.cursor < state.snapshot.lastSeq;
}

function abbreviate(text: string): string {
  return text.length > 400 ? text.slice(0, 400) + "…" : text;
}
