// Wires the pieces together: one ApiClient, one Store, one long-poll loop.
// Every state change flows server -> store -> render; the DOM never keeps
// its own copy of pipeline state.

import { ApiClient, ApiError } from "./api.js";
import { renderGraphView } from "./graph.js";
import { PanelActions, renderStagePanel } from "./panels.js";
import { PollHandle, startEventLoop } from "./poll.js";
import { Store, ViewState } from "./store.js";
import { renderTranscript } from "./transcript.js";
import { ArtifactName, Decision } from "./types.js";

const ARTIFACT_FILES: Record<ArtifactName, string> = {
  ontology: "ontology.json",
  kg: "kg.json",
  cypher: "kg.cypher",
};

export interface App {
  store: Store;
  client: ApiClient;
  actions: PanelActions;
  stop(): void;
}

export async function boot(root: HTMLElement, client: ApiClient, store: Store): Promise<App> {
  root.innerHTML = "";
  const header = document.createElement("header");
  header.className = "app-header";
  const title = document.createElement("h1");
  title.textContent = "OntoForge";
  const badge = document.createElement("span");
  badge.className = "stage-badge";
  header.appendChild(title);
  header.appendChild(badge);

  const layout = document.createElement("div");
  layout.className = "app-layout";
  const transcriptBox = document.createElement("section");
  transcriptBox.id = "transcript";
  const panelBox = document.createElement("section");
  panelBox.id = "stage-panel";
  layout.appendChild(transcriptBox);
  layout.appendChild(panelBox);

  const graphBox = document.createElement("section");
  graphBox.id = "graph";
  graphBox.hidden = true;
  const cypherBox = document.createElement("section");
  cypherBox.id = "cypher";
  cypherBox.hidden = true;

  root.appendChild(header);
  root.appendChild(layout);
  root.appendChild(graphBox);
  root.appendChild(cypherBox);

  let loadingArtifacts = false;

  async function run(work: () => Promise<void>): Promise<void> {
    if (store.get().busy) return;
    store.set({ busy: true, error: null });
    try {
      await work();
    } catch (err) {
      store.set({ error: describeError(err) });
    } finally {
      store.set({ busy: false });
    }
  }

  const actions: PanelActions = {
    sendText: (text: string) =>
      void run(async () => {
        const result = await client.sendFreeText(requireId(store), text);
        store.set({ snapshot: result.session });
      }),
    sendDecision: (decision: Decision) =>
      void run(async () => {
        const result = await client.sendDecision(requireId(store), decision);
        store.set({ snapshot: result.session });
      }),
    advance: () =>
      void run(async () => {
        const snapshot = await client.advance(requireId(store));
        store.set({ snapshot });
      }),
    download: (name: ArtifactName) =>
      void run(async () => {
        const text = await fetchArtifact(name);
        saveToDisk(ARTIFACT_FILES[name], text);
      }),
  };

  async function fetchArtifact(name: ArtifactName): Promise<string> {
    const cached = store.get().artifacts[name];
    if (cached !== undefined) return cached;
    const text = await client.artifact(requireId(store), name);
    store.set({ artifacts: { ...store.get().artifacts, [name]: text } });
    return text;
  }

  async function loadFinalArtifacts(): Promise<void> {
    if (loadingArtifacts) return;
    loadingArtifacts = true;
    try {
      for (const name of Object.keys(ARTIFACT_FILES) as ArtifactName[]) {
        if (store.get().artifacts[name] === undefined) {
          const text = await client.artifact(requireId(store), name);
          store.set({ artifacts: { ...store.get().artifacts, [name]: text } });
        }
      }
    } catch {
      loadingArtifacts = false;
      return;
    }
  }

  function render(state: ViewState): void {
    badge.textContent = state.snapshot ? state.snapshot.stage : "connecting";
    renderTranscript(transcriptBox, state.transcript);
    renderStagePanel(panelBox, state, actions);

    const complete = state.snapshot?.stage === "Complete";
    if (complete && state.artifacts.kg === undefined) {
      void loadFinalArtifacts();
    }
    graphBox.hidden = !(complete && state.artifacts.kg !== undefined);
    if (!graphBox.hidden && graphBox.dataset.rendered !== state.artifacts.kg) {
      renderGraphView(graphBox, state.artifacts.kg ?? "");
      graphBox.dataset.rendered = state.artifacts.kg;
    }
    cypherBox.hidden = !(complete && state.artifacts.cypher !== undefined);
    if (!cypherBox.hidden && cypherBox.dataset.rendered !== state.artifacts.cypher) {
      cypherBox.innerHTML = "";
      const h = document.createElement("h2");
      h.textContent = "Cypher statements";
      const pre = document.createElement("pre");
      pre.className = "cypher-preview";
      pre.textContent = state.artifacts.cypher ?? "";
      cypherBox.appendChild(h);
      cypherBox.appendChild(pre);
      cypherBox.dataset.rendered = state.artifacts.cypher;
    }
  }

  const unsubscribe = store.subscribe(render);
  render(store.get());

  const session = await client.createSession();
  store.set({ sessionId: session.id, snapshot: session });
  const poll: PollHandle = startEventLoop(client, store);

  return {
    store,
    client,
    actions,
    stop() {
      poll.stop();
      unsubscribe();
    },
  };
}

function requireId(store: Store): string {
  const id = store.get().sessionId;
  if (!id) throw new Error("no session yet");
  return id;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.errorKind}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

function saveToDisk(filename: string, text: string): void {
  // happy-dom lacks createObjectURL; tests read store.artifacts instead
  if (typeof URL.createObjectURL !== "function") return;
  const blob = new Blob([text], { type: "application/octet-stream" });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  document.body.appendChild(a);
  a.click();
  a.remove();
  URL.revokeObjectURL(url);
}
