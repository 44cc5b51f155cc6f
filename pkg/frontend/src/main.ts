// Browser shell: hash routing over the three screens, a 2-second poll of run
// status, and resolution submission. All data flows through ReviewClient;
// the only write is POST /gates/{id}/resolution.

import { ApiError, ReviewClient } from "./api.js";
import {
  renderCardAudit,
  renderConnectionLost,
  renderGateDetail,
  renderGateQueue,
  renderNotFound,
  renderResolutionConflict,
  renderValidationError,
} from "./render.js";

const client = new ReviewClient("");
const POLL_MS = 2000;

function mount(html: string): void {
  const root = document.getElementById("app");
  if (root) root.innerHTML = html;
}

async function showQueue(): Promise<void> {
  try {
    const [gates, runs] = await Promise.all([client.listGates(), client.listRuns()]);
    mount(renderGateQueue(gates, runs[0] ?? null));
  } catch (err) {
    mount(renderConnectionLost(String(err)));
  }
}

async function showGate(gateId: string): Promise<void> {
  try {
    const view = await client.loadGateView(gateId);
    mount(renderGateDetail(view));
    wireResolutionForm(gateId);
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      mount(renderNotFound("gate"));
    } else {
      mount(renderConnectionLost(String(err)));
    }
  }
}

async function showCards(runId: string): Promise<void> {
  try {
    const run = await client.getRun(runId);
    const views = await client.loadCardViews(runId);
    mount(renderCardAudit(views, run));
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      mount(renderNotFound("run"));
    } else {
      mount(renderConnectionLost(String(err)));
    }
  }
}

function wireResolutionForm(gateId: string): void {
  const form = document.getElementById("resolution-form") as HTMLFormElement | null;
  if (!form) return;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const optionId = data.get("option") as string | null;
    const attested = (data.get("attested_value") as string | null)?.trim() ?? "";
    const note = (data.get("note") as string | null)?.trim() ?? "";
    const errorSlot = document.getElementById("submit-error");

    if (!optionId && !attested) {
      if (errorSlot) errorSlot.innerHTML = renderValidationError(
        "choose an option or attest a value");
      return;
    }
    if (attested && !note) {
      if (errorSlot) errorSlot.innerHTML = renderValidationError(
        "attested values need a note saying who confirmed them");
      return;
    }
    try {
      const body = optionId
        ? { option_id: optionId, note }
        : { attested_value: attested, note };
      const result = await client.resolveGate(gateId, body);
      location.hash = `#/runs/${encodeURIComponent(result.run_id)}/cards`;
      pollRunStatus(result.run_id);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        mount(renderResolutionConflict());
      } else if (err instanceof ApiError && err.status === 422) {
        if (errorSlot) errorSlot.innerHTML = renderValidationError(err.detail);
      } else {
        mount(renderConnectionLost(String(err)));
      }
    }
  });
}

let pollTimer: number | undefined;

function pollRunStatus(runId: string): void {
  if (pollTimer !== undefined) window.clearInterval(pollTimer);
  pollTimer = window.setInterval(async () => {
    try {
      const run = await client.getRun(runId);
      const slot = document.querySelector("[data-role=run-status]");
      if (slot) slot.textContent = run.status;
      if (run.status === "done" || run.status === "failed") {
        window.clearInterval(pollTimer);
        route();
      }
    } catch {
      // transient poll failure: keep trying; screens show their own banners
    }
  }, POLL_MS);
}

function route(): void {
  const hash = location.hash || "#/gates";
  const gateMatch = hash.match(/^#\/gates\/([^/]+)$/);
  const cardsMatch = hash.match(/^#\/runs\/([^/]+)\/cards$/);
  if (gateMatch && gateMatch[1]) {
    void showGate(decodeURIComponent(gateMatch[1]));
  } else if (cardsMatch && cardsMatch[1]) {
    void showCards(decodeURIComponent(cardsMatch[1]));
  } else {
    void showQueue();
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
