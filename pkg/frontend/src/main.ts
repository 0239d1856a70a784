// Browser entry point. Tests import boot() from app.ts directly and skip
// the autoboot guard below.

import { ApiClient } from "./api.js";
import { boot } from "./app.js";
import { Store } from "./store.js";

const root = document.getElementById("app");
if (root && root.hasAttribute("data-autoboot")) {
  const client = new ApiClient(window.location.origin);
  const store = new Store();
  boot(root, client, store).catch((err) => {
    root.textContent = `Failed to start: ${err instanceof Error ? err.message : err}`;
  });
}
