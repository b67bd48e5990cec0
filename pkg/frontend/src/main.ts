// Entry point: wires the controller to the page served by the same
// server the RPC calls go to.

import { Client } from "./client.js";
import { EditorController } from "./controller.js";
import { byId, View } from "./view.js";

function mount(): void {
  const client = new Client(window.location.origin);
  const controller = new EditorController(client);
  const view = new View(controller, {
    uriInput: byId("uri"),
    openButton: byId("open"),
    textInput: byId("paste"),
    gutter: byId("gutter"),
    editor: byId("editor"),
    backdrop: byId("backdrop"),
    status: byId("status"),
    errorList: byId("errors"),
    astPanel: byId("ast"),
    hintPanel: byId("hints"),
    searchInput: byId("query"),
    searchButton: byId("go"),
    searchResults: byId("results"),
    relationBar: byId("relations"),
    inferredToggle: byId("inferred"),
  });

  void controller
    .connect()
    .then(() => {
      const uri = new URLSearchParams(window.location.search).get("uri");
      if (uri !== null) return controller.open(uri);
      return undefined;
    })
    .catch((e) => {
      byId("status").textContent = `⚠ ${String(e)}`;
    });

  window.setInterval(() => {
    void controller.drainNotifications().catch(() => undefined);
  }, 1500);

  view.render();
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", mount);
} else {
  mount();
}
