// Types mirroring the review service's JSON interface.

export interface RunInfo {
  run_id: string;
  status: "running" | "gated" | "done" | "failed";
  open_gates: number;
}

export type SpanRef = [string, string, number, number]; // doc_id, version, start, end

export interface GateOption {
  option_id: string;
  value: string;
  doc_id: string;
  version: string;
  spans: SpanRef[];
}

export interface Gate {
  gate_id: string;
  question: string;
  reason: string;
  field: string;
  supplier_id: string;
  part_id: string;
  options: GateOption[];
}

export interface SpanText {
  doc_id: string;
  version: string;
  start: number;
  end: number;
  text: string;
}

export interface BindingConstraint {
  family: string;
  value: string;
  provenance: { doc_id: string; version: string; start: number; end: number }[];
  labels: string[];
  structural: boolean;
  human_attested: boolean;
}

export interface Card {
  decision: string;
  binding_constraints: BindingConstraint[];
  sensitivity_note: string;
  conditional_collapse_notes: string[];
}

export interface ResolutionRequest {
  option_id?: string;
  attested_value?: string | number;
  note?: string;
}

export interface ResolutionResult {
  run_id: string;
  status: string;
  open_gates: number;
}

/** Gate enriched with the evidence excerpt behind each option, fetched
 * verbatim from the span endpoint (never re-derived client-side). */
export interface GateView {
  gate: Gate;
  excerpts: Map<string, string>; // span key -> exact text
  runStatus: RunInfo | null;
}

export interface CardView {
  card: Card;
  excerpts: Map<string, string>;
}

export function spanKey(doc: string, version: string, start: number, end: number): string {
  return `${doc}@${version}:${start}-${end}`;
}
