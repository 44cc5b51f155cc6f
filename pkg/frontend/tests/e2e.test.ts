// End-to-end: a real gated run served by the review service, worked through
// the console's client and renderers. Covers the full reviewer loop: list the
// gate, read evidence byte-identically, resolve, watch the run finish, audit
// cards, and hit the conflict state on a double submit.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ReviewClient } from "../src/api.js";
import {
  renderCardAudit,
  renderGateDetail,
  renderGateQueue,
  renderResolutionConflict,
} from "../src/render.js";
import { spanKey } from "../src/types.js";

const PORT = 8460 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;
const FIXTURES = join(__dirname, "..", "..", "src", "clauseplan", "fixtures");

let bundleDir: string;
let server: ChildProcess;
const client = new ReviewClient(BASE);

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 60; attempt += 1) {
    try {
      const res = await fetch(`${BASE}/runs`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("review service did not come up");
}

beforeAll(async () => {
  bundleDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  try {
    execFileSync("clauseplan", [
      "plan",
      "--corpus", join(FIXTURES, "corpus.json"),
      "--master", join(FIXTURES, "master_data.json"),
      "--instance", join(FIXTURES, "instance_small.json"),
      "--out", bundleDir,
    ], { stdio: "pipe" });
  } catch (err: unknown) {
    const status = (err as { status?: number }).status;
    if (status !== 2) throw err; // 2 = gated, the state this test needs
  }
  server = spawn("clauseplan", ["serve", "--dir", bundleDir,
                                "--port", String(PORT)],
                 { stdio: "ignore" });
  await waitForService();
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(bundleDir, { recursive: true, force: true });
});

describe("reviewer end-to-end loop", () => {
  it("works a gated run from queue to audited cards", async () => {
    // the queue lists the single open gate
    const gates = await client.listGates();
    expect(gates).toHaveLength(1);
    const gate = gates[0]!;
    expect(gate.reason).toBe("class_c_conflict");
    const runsBefore = await client.listRuns();
    expect(runsBefore[0]!.status).toBe("gated");
    const queueHtml = renderGateQueue(gates, runsBefore[0]!);
    expect(queueHtml).toContain(gate.gate_id);

    // evidence excerpts are byte-identical to the span endpoint
    const view = await client.loadGateView(gate.gate_id);
    const [doc, version, start, end] = gate.options[0]!.spans[0]!;
    const direct = await client.getSpan(doc, version, start, end);
    const excerpt = view.excerpts.get(spanKey(doc, version, start, end))!;
    expect(excerpt).toBe(direct.text);
    expect(Buffer.from(excerpt, "utf-8").equals(
      Buffer.from(direct.text, "utf-8"))).toBe(true);
    expect(excerpt).toContain("MOQ per PO line is 150 units");
    expect(renderGateDetail(view)).toContain("MOQ per PO line is 150 units");

    // submitting the resolution resumes the run to done
    const result = await client.resolveGate(gate.gate_id, {
      option_id: "opt-1",
      note: "enforce the unconditioned MOQ",
    });
    expect(result.status).toBe("done");
    expect(result.open_gates).toBe(0);

    // poll until the run reflects the resumed state
    let status = "";
    for (let i = 0; i < 20 && status !== "done"; i += 1) {
      status = (await client.getRun(result.run_id)).status;
      if (status !== "done") await new Promise((r) => setTimeout(r, 250));
    }
    expect(status).toBe("done");

    // decision cards render with provenance excerpts
    const cardViews = await client.loadCardViews(result.run_id);
    expect(cardViews.length).toBeGreaterThan(0);
    const audit = renderCardAudit(cardViews, await client.getRun(result.run_id));
    expect(audit).toContain("Order 150 units");
    expect(audit).toContain("Addendum-3:L1");
    expect(audit).toContain("MOQ per PO line is 150 units");

    // a second submission surfaces the conflict state
    let conflictHtml = "";
    try {
      await client.resolveGate(gate.gate_id, { option_id: "opt-1" });
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(409);
      conflictHtml = renderResolutionConflict();
    }
    expect(conflictHtml).toContain("Already resolved elsewhere");
  }, 60_000);

  it("rejects malformed resolutions with an inline 422", async () => {
    try {
      await client.resolveGate("gate-000000000000", { option_id: "opt-1" });
      expect.unreachable("expected an error for an unknown gate");
    } catch (err) {
      expect((err as ApiError).status).toBe(404);
    }
  });
});
