// Typed client for the review service. All reads are GETs; the only
// mutation the console ever performs is posting a gate resolution.

import type {
  Card,
  Gate,
  GateView,
  CardView,
  ResolutionRequest,
  ResolutionResult,
  RunInfo,
  SpanText,
} from "./types.js";
import { spanKey } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const res = await fetch(base + path);
  if (!res.ok) {
    const body = await res.text();
    throw new ApiError(res.status, body);
  }
  return (await res.json()) as T;
}

export class ReviewClient {
  constructor(private base: string = "") {}

  listRuns(): Promise<RunInfo[]> {
    return getJson(this.base, "/runs");
  }

  getRun(runId: string): Promise<RunInfo> {
    return getJson(this.base, `/runs/${encodeURIComponent(runId)}`);
  }

  getCards(runId: string): Promise<Card[]> {
    return getJson(this.base, `/runs/${encodeURIComponent(runId)}/cards`);
  }

  listGates(): Promise<Gate[]> {
    return getJson(this.base, "/gates");
  }

  getGate(gateId: string): Promise<Gate> {
    return getJson(this.base, `/gates/${encodeURIComponent(gateId)}`);
  }

  getSpan(doc: string, version: string, start: number, end: number): Promise<SpanText> {
    const params = new URLSearchParams({ start: String(start), end: String(end) });
    return getJson(
      this.base,
      `/documents/${encodeURIComponent(doc)}/${encodeURIComponent(version)}/span?${params}`,
    );
  }

  async resolveGate(gateId: string, body: ResolutionRequest): Promise<ResolutionResult> {
    const res = await fetch(
      `${this.base}/gates/${encodeURIComponent(gateId)}/resolution`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!res.ok) {
      const detail = await res.text();
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as ResolutionResult;
  }

  /** Gate plus the exact evidence text behind each option's spans. */
  async loadGateView(gateId: string): Promise<GateView> {
    const gate = await this.getGate(gateId);
    const excerpts = new Map<string, string>();
    for (const option of gate.options) {
      for (const [doc, version, start, end] of option.spans) {
        const key = spanKey(doc, version, start, end);
        if (!excerpts.has(key)) {
          const span = await this.getSpan(doc, version, start, end);
          excerpts.set(key, span.text);
        }
      }
    }
    const runs = await this.listRuns();
    return { gate, excerpts, runStatus: runs[0] ?? null };
  }

  /** Cards plus the exact evidence text behind every binding constraint. */
  async loadCardViews(runId: string): Promise<CardView[]> {
    const cards = await this.getCards(runId);
    const views: CardView[] = [];
    for (const card of cards) {
      const excerpts = new Map<string, string>();
      for (const binding of card.binding_constraints) {
        for (const p of binding.provenance) {
          const key = spanKey(p.doc_id, p.version, p.start, p.end);
          if (!excerpts.has(key)) {
            const span = await this.getSpan(p.doc_id, p.version, p.start, p.end);
            excerpts.set(key, span.text);
          }
        }
      }
      views.push({ card, excerpts });
    }
    return views;
  }
}
