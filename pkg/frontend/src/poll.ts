import type { ApiClient } from "./api.js";
import { applyEvent, type Store } from "./store.js";

export interface PollHandle {
  stop(): void;
}

// Long-poll loop on the events endpoint. One request in flight at a time;
// the server holds the request until something happens or the timeout runs
// out, so an idle loop costs one request per timeout window.
export function startEventLoop(
  client: ApiClient,
  store: Store,
  timeoutSeconds = 20,
): PollHandle {
  let stopped = false;

  async function loop(): Promise<void> {
    while (!stopped) {
      const state = store.get();
      if (!state.sessionId) return;
      try {
        const events = await client.events(state.sessionId, state.cursor, timeoutSeconds);
        for (const event of events) applyEvent(store, event);
      } catch {
        if (stopped) return;
        await sleep(1000);
      }
    }
  }

  void loop();
  return {
    stop() {
      stopped = true;
    },
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

// Drains events once without waiting; used after mutations so the transcript
// catches up immediately instead of on the next poll wakeup.
export async function drainEvents(client: ApiClient, store: Store): Promise<void> {
  const state = store.get();
  if (!state.sessionId) return;
  const events = await client.events(state.sessionId, state.cursor, 0);
  for (const event of events) applyEvent(store, event);
}
