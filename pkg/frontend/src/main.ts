// Wires the three panes together against a configurable API base URL.

import { ApiClient, ApiHttpError } from "./api.js";
import { LookupView } from "./lookup.js";
import { renderNetwork } from "./network.js";
import { parseFlaggedCsv, renderReviewQueue, ReviewQueue } from "./review.js";

function mustFind<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing #${id} in the page shell`);
  }
  return el as T;
}

export function bootstrap(): void {
  const shell = mustFind<HTMLElement>("app");
  const api = new ApiClient(shell.dataset.apiBase ?? "");

  const lookup = new LookupView(mustFind("lookup-pane"), api);
  const networkPane = mustFind("network-pane");
  const reviewPane = mustFind("review-pane");

  const drillDown = (username: string) => {
    void lookup.show(username);
    mustFind("lookup-pane").scrollIntoView();
  };

  const lookupForm = mustFind<HTMLFormElement>("lookup-form");
  lookupForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const username = mustFind<HTMLInputElement>("lookup-input").value.trim();
    if (username !== "") {
      void lookup.show(username);
    }
  });

  const networkForm = mustFind<HTMLFormElement>("network-form");
  networkForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    const seeds = mustFind<HTMLInputElement>("network-seeds").value
      .split(",").map((s) => s.trim()).filter((s) => s !== "");
    const depth = Number(mustFind<HTMLInputElement>("network-depth").value || "1");
    try {
      const doc = await api.network(seeds, depth);
      renderNetwork(networkPane, doc, drillDown);
    } catch (err) {
      networkPane.replaceChildren();
      const banner = document.createElement("div");
      banner.className = "banner error";
      banner.textContent = err instanceof ApiHttpError
        ? `${err.code}: ${err.message}`
        : String(err);
      networkPane.appendChild(banner);
    }
  });

  let queue = new ReviewQueue([]);
  const upload = mustFind<HTMLInputElement>("review-upload");
  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) {
      return;
    }
    const parsed = parseFlaggedCsv(await file.text());
    queue = new ReviewQueue(parsed.rows);
    renderReviewQueue(reviewPane, parsed, queue, drillDown);
  });

  mustFind<HTMLButtonElement>("review-export").addEventListener("click", () => {
    const blob = new Blob([queue.exportCsv()], { type: "text/csv" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "labels.csv";
    link.click();
    URL.revokeObjectURL(link.href);
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap();
}
