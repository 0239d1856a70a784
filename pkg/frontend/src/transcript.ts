// Chat log rendering. Entries come exclusively from server events replayed
// through the store, so a reload reproduces the same transcript.

import { ChatEntry } from "./store.js";

export function renderTranscript(container: HTMLElement, entries: ChatEntry[]): void {
  container.innerHTML = "";
  container.classList.add("transcript");
  if (entries.length === 0) {
    const hint = document.createElement("p");
    hint.className = "transcript-hint";
    hint.textContent = "Describe the knowledge you want to capture to begin.";
    container.appendChild(hint);
    return;
  }
  for (const entry of entries) {
    const row = document.createElement("div");
    row.className = `chat-entry chat-${entry.role}`;
    const who = document.createElement("span");
    who.className = "chat-role";
    who.textContent =
      entry.role === "user" ? "You" : entry.role === "assistant" ? "Assistant" : "System";
    const body = document.createElement("pre");
    body.className = "chat-text";
    body.textContent = entry.text;
    row.appendChild(who);
    row.appendChild(body);
    container.appendChild(row);
  }
  container.scrollTop = container.scrollHeight;
}
