import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderCardAudit,
  renderConnectionLost,
  renderGateDetail,
  renderGateQueue,
  renderResolutionConflict,
} from "../src/render.js";
import type { Card, Gate, GateView, RunInfo } from "../src/types.js";
import { spanKey } from "../src/types.js";

const run: RunInfo = { run_id: "run-abc", status: "gated", open_gates: 1 };

const gate: Gate = {
  gate_id: "gate-123",
  question: "Which source is authoritative for moq on part 88321?",
  reason: "class_c_conflict",
  field: "moq",
  supplier_id: "SUP-17",
  part_id: "88321",
  options: [
    {
      option_id: "opt-1",
      value: "150",
      doc_id: "Addendum-3",
      version: "v1",
      spans: [["Addendum-3", "v1", 143, 269]],
    },
  ],
};

describe("gate queue", () => {
  it("lists open gates with their questions", () => {
    const html = renderGateQueue([gate], run);
    expect(html).toContain("gate-123");
    expect(html).toContain("Which source is authoritative");
    expect(html).toContain("class_c_conflict");
    expect(html).toContain("gated");
  });

  it("shows an empty state when nothing is gated", () => {
    const html = renderGateQueue([], { ...run, status: "done", open_gates: 0 });
    expect(html).toContain("data-role=\"empty-queue\"");
    expect(html).toContain("No open gates");
  });
});

describe("gate detail", () => {
  it("renders the evidence excerpt verbatim modulo HTML escaping", () => {
    const raw = 'the MOQ per PO line is 150 units & <b>not</b> "120"';
    const view: GateView = {
      gate,
      excerpts: new Map([[spanKey("Addendum-3", "v1", 143, 269), raw]]),
      runStatus: run,
    };
    const html = renderGateDetail(view);
    expect(html).toContain(escapeHtml(raw));
    // unescaping the rendered excerpt reproduces the raw bytes
    const unescaped = escapeHtml(raw)
      .replace(/&lt;/g, "<")
      .replace(/&gt;/g, ">")
      .replace(/&quot;/g, '"')
      .replace(/&amp;/g, "&");
    expect(unescaped).toBe(raw);
  });

  it("offers the attested-value path with a note field", () => {
    const view: GateView = { gate, excerpts: new Map(), runStatus: run };
    const html = renderGateDetail(view);
    expect(html).toContain("attested_value");
    expect(html).toContain("note");
  });
});

describe("card audit", () => {
  const card: Card = {
    decision: "Order 150 units of part 88321 from supplier SUP-17 in period 1",
    binding_constraints: [
      {
        family: "moq",
        value: "MOQ 150",
        provenance: [{ doc_id: "Addendum-3", version: "v1", start: 143, end: 269 }],
        labels: ["Addendum-3:L1"],
        structural: false,
        human_attested: true,
      },
    ],
    sensitivity_note: "raising MOQ one grid step (to 200) changes the plan",
    conditional_collapse_notes: ["conditional collapsed (evidence: Addendum-3:L2)"],
  };

  it("renders bindings, attestation badges, and collapse notes", () => {
    const excerpts = new Map([
      [spanKey("Addendum-3", "v1", 143, 269), "the MOQ per PO line is 150 units"],
    ]);
    const html = renderCardAudit([{ card, excerpts }], { ...run, status: "done" });
    expect(html).toContain("Order 150 units");
    expect(html).toContain("Addendum-3:L1");
    expect(html).toContain("data-role=\"attested-badge\"");
    expect(html).toContain("Addendum-3:L2");
    expect(html).toContain("the MOQ per PO line is 150 units");
  });

  it("explains an empty plan", () => {
    const html = renderCardAudit([], { ...run, status: "done" });
    expect(html).toContain("data-role=\"empty-cards\"");
  });
});

describe("banners", () => {
  it("connection loss offers a retry", () => {
    const html = renderConnectionLost("fetch failed");
    expect(html).toContain("data-role=\"connection-lost\"");
    expect(html).toContain("Retry");
  });

  it("conflict state names the cause", () => {
    expect(renderResolutionConflict()).toContain("Already resolved elsewhere");
  });
});
