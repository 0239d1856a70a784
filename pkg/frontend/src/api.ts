import type {
  ArtifactName,
  Decision,
  MessageResult,
  ServerEvent,
  SessionSnapshot,
} from "./types.js";

// Every request the client can make, recorded for the end-to-end audit.
export interface ApiCall {
  method: string;
  path: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorKind: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let kind = "Unknown";
  let detail = `HTTP ${resp.status}`;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") kind = body.error;
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(resp.status, kind, detail);
}

export class ApiClient {
  readonly requestLog: ApiCall[] = [];

  constructor(private base: string = "") {}

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    this.requestLog.push({ method, path });
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) throw await parseError(resp);
    return resp;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.request(method, path, body);
    return (await resp.json()) as T;
  }

  createSession(): Promise<SessionSnapshot> {
    return this.json("POST", "/sessions");
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.json("GET", `/sessions/${id}`);
  }

  sendFreeText(id: string, text: string): Promise<MessageResult> {
    return this.json("POST", `/sessions/${id}/message`, { kind: "freeText", text });
  }

  sendDecision(id: string, decision: Decision): Promise<MessageResult> {
    return this.json("POST", `/sessions/${id}/message`, {
      kind: "decision",
      text: JSON.stringify(decision),
    });
  }

  advance(id: string): Promise<SessionSnapshot> {
    return this.json("POST", `/sessions/${id}/advance`);
  }

  async events(id: string, after: number, timeout: number): Promise<ServerEvent[]> {
    const result = await this.json<{ events: ServerEvent[] }>(
      "GET",
      `/sessions/${id}/events?after=${after}&timeout=${timeout}`,
    );
    return result.events;
  }

  // Raw text on purpose: downloads must stay byte-identical, so the body is
  // never parsed and re-serialized.
  async artifact(id: string, name: ArtifactName): Promise<string> {
    const resp = await this.request("GET", `/sessions/${id}/artifacts/${name}`);
    return await resp.text();
  }

  pushDb(
    id: string,
    endpoint: string,
    username?: string,
    password?: string,
    database?: string,
  ): Promise<Record<string, unknown>> {
    return this.json("POST", `/sessions/${id}/push-db`, {
      endpoint,
      username,
      password,
      database,
    });
  }
}

// The documented API surface; the e2e test checks every logged call against it.
export const DOCUMENTED_CALLS: { method: string; pattern: RegExp }[] = [
  { method: "POST", pattern: /^\/sessions$/ },
  { method: "GET", pattern: /^\/sessions\/[0-9a-f]+$/ },
  { method: "POST", pattern: /^\/sessions\/[0-9a-f]+\/message$/ },
  { method: "POST", pattern: /^\/sessions\/[0-9a-f]+\/advance$/ },
  { method: "GET", pattern: /^\/sessions\/[0-9a-f]+\/events\?after=\d+&timeout=[\d.]+$/ },
  { method: "GET", pattern: /^\/sessions\/[0-9a-f]+\/artifacts\/(ontology|kg|cypher)$/ },
  { method: "POST", pattern: /^\/sessions\/[0-9a-f]+\/push-db$/ },
];

export function isDocumentedCall(call: ApiCall): boolean {
  return DOCUMENTED_CALLS.some(
    (d) => d.method === call.method && d.pattern.test(call.path),
  );
}
