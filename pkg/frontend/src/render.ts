// Pure screen renderers. Each returns an HTML string so the rendering logic
// is testable without a browser; main.ts mounts the strings into the page.
// Evidence excerpts pass through escapeHtml only -- the displayed text is
// byte-identical to the span endpoint's response.

import type { Card, CardView, Gate, GateView, RunInfo } from "./types.js";
import { spanKey } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderConnectionLost(detail: string): string {
  return `<div class="banner error" data-role="connection-lost">` +
    `Connection to the review service lost. ${escapeHtml(detail)} ` +
    `<a href="javascript:location.reload()">Retry</a></div>`;
}

export function renderGateQueue(gates: Gate[], run: RunInfo | null): string {
  const status = run
    ? `<p class="run-status">Run <code>${escapeHtml(run.run_id)}</code>: ` +
      `<strong data-role="run-status">${escapeHtml(run.status)}</strong></p>`
    : "";
  if (gates.length === 0) {
    return `${status}<p class="empty" data-role="empty-queue">` +
      `No open gates. Nothing waits on review.</p>`;
  }
  const rows = gates
    .map(
      (g) =>
        `<li class="gate-row"><a href="#/gates/${encodeURIComponent(g.gate_id)}">` +
        `<span class="reason">${escapeHtml(g.reason)}</span> ` +
        `${escapeHtml(g.question)}</a></li>`,
    )
    .join("");
  return `${status}<h2>Open gates (oldest first)</h2><ul class="gate-queue">${rows}</ul>`;
}

export function renderGateDetail(view: GateView): string {
  const { gate, excerpts } = view;
  const options = gate.options
    .map((option) => {
      const evidence = option.spans
        .map(([doc, version, start, end]) => {
          const text = excerpts.get(spanKey(doc, version, start, end)) ?? "";
          return (
            `<blockquote class="evidence" data-span="${escapeHtml(
              spanKey(doc, version, start, end),
            )}">${escapeHtml(text)}</blockquote>` +
            `<p class="source">${escapeHtml(doc)} ${escapeHtml(version)} ` +
            `bytes ${start}-${end}</p>`
          );
        })
        .join("");
      return (
        `<label class="option"><input type="radio" name="option" ` +
        `value="${escapeHtml(option.option_id)}"> ` +
        `<strong>${escapeHtml(option.value)}</strong>` +
        (option.doc_id ? ` <span class="doc">from ${escapeHtml(option.doc_id)}</span>` : "") +
        `${evidence}</label>`
      );
    })
    .join("");
  return (
    `<h2>Gate ${escapeHtml(gate.gate_id)}</h2>` +
    `<p class="reason">Reason: <strong>${escapeHtml(gate.reason)}</strong></p>` +
    `<p class="question">${escapeHtml(gate.question)}</p>` +
    `<form id="resolution-form">${options}` +
    `<fieldset class="attest"><legend>or attest a value</legend>` +
    `<input name="attested_value" placeholder="value">` +
    `<input name="note" placeholder="who confirmed it and how (required)">` +
    `</fieldset>` +
    `<button type="submit">Submit resolution</button>` +
    `<span id="submit-error" class="inline-error" role="alert"></span>` +
    `</form>`
  );
}

export function renderResolutionConflict(): string {
  return `<div class="banner warn" data-role="conflict">` +
    `Already resolved elsewhere. Reload to see the current state.</div>`;
}

export function renderValidationError(detail: string): string {
  return `<span class="inline-error">${escapeHtml(detail)}</span>`;
}

function renderBinding(card: Card, excerpts: Map<string, string>): string {
  return card.binding_constraints
    .map((binding) => {
      const badge = binding.human_attested
        ? `<span class="badge attested" data-role="attested-badge">human attested</span>`
        : binding.structural
          ? `<span class="badge structural">structural</span>`
          : "";
      const evidence = binding.provenance
        .map((p) => {
          const key = spanKey(p.doc_id, p.version, p.start, p.end);
          const text = excerpts.get(key) ?? "";
          return `<blockquote class="evidence" data-span="${escapeHtml(key)}">` +
            `${escapeHtml(text)}</blockquote>`;
        })
        .join("");
      const labels = binding.labels.map(escapeHtml).join(", ");
      return (
        `<li class="binding"><strong>${escapeHtml(binding.family)}</strong>: ` +
        `${escapeHtml(binding.value)} ${badge}` +
        `<span class="labels">${labels}</span>${evidence}</li>`
      );
    })
    .join("");
}

export function renderCardAudit(views: CardView[], run: RunInfo | null): string {
  const heading = run
    ? `<h2>Decision cards for run <code>${escapeHtml(run.run_id)}</code></h2>`
    : `<h2>Decision cards</h2>`;
  if (views.length === 0) {
    return `${heading}<p class="empty" data-role="empty-cards">` +
      `The plan places no orders, so there are no decisions to audit.</p>`;
  }
  const cards = views
    .map(({ card, excerpts }) => {
      const notes = card.conditional_collapse_notes
        .map((n) => `<p class="collapse-note">${escapeHtml(n)}</p>`)
        .join("");
      return (
        `<article class="card"><h3>${escapeHtml(card.decision)}</h3>` +
        `<ul class="bindings">${renderBinding(card, excerpts)}</ul>` +
        `<p class="sensitivity">${escapeHtml(card.sensitivity_note)}</p>` +
        `${notes}</article>`
      );
    })
    .join("");
  return heading + cards;
}

export function renderNotFound(what: string): string {
  return `<p class="empty">No such ${escapeHtml(what)}.</p>`;
}
