"""Typed constraint schema with provenance, plus the first two verifier layers.

Houses the extraction record shape, schema validation (layer 1), evidence
grounding checks (layer 2), and deterministic normalization to canonical
units and master identifiers. All operations are pure functions.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .corpus import Corpus, EvidenceSpan, resolve_span
from .errors import UnitError

WEEK_DAYS = 7
MONTH_DAYS = 30  # fixed contract-month length for rate conversion

SUBSTITUTION_POLICIES = ("allowed", "forbidden", "allowed_with_approval")

_MONTH_ABBREV = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")

# Fields that bind contract values; each populated one needs evidence spans.
VALUE_FIELDS = ("moq", "lead_time", "capacity_per_period", "price_tiers",
                "substitution_policy")


@dataclass(frozen=True)
class Scope:
    site: str | None = None
    region: str | None = None
    sku_family: str | None = None

    def key(self) -> tuple:
        return (self.site, self.region, self.sku_family)


@dataclass(frozen=True)
class Duration:
    value: float
    unit: str  # "days" | "weeks" | "periods"

    def days(self) -> float:
        if self.unit == "days":
            return self.value
        if self.unit == "weeks":
            return self.value * WEEK_DAYS
        raise UnitError(f"duration unit {self.unit!r} has no day equivalent")


@dataclass(frozen=True)
class SeasonWindow:
    """Recurring month/day window, inclusive on both ends (e.g. Aug 1 - Oct 31)."""

    start_month: int
    start_day: int
    end_month: int
    end_day: int

    def contains(self, d: date) -> bool:
        start = (self.start_month, self.start_day)
        end = (self.end_month, self.end_day)
        probe = (d.month, d.day)
        if start <= end:
            return start <= probe <= end
        return probe >= start or probe <= end  # wraps around year end

    def display(self) -> str:
        return f"{_MONTH_ABBREV[self.start_month - 1]}--{_MONTH_ABBREV[self.end_month - 1]}"

    @classmethod
    def from_display(cls, text: str) -> "SeasonWindow":
        m = re.fullmatch(r"(\w{3})--(\w{3})", text)
        if not m:
            raise ValueError(f"bad season window {text!r}")
        start = _MONTH_ABBREV.index(m.group(1)) + 1
        end = _MONTH_ABBREV.index(m.group(2)) + 1
        last_day = (31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
        return cls(start, 1, end, last_day[end - 1])


@dataclass(frozen=True)
class LeadTimeSpec:
    standard: Duration
    peak: Duration | None = None
    peak_window: SeasonWindow | None = None


@dataclass(frozen=True)
class PriceTier:
    threshold: int
    unit_price: float


@dataclass(frozen=True)
class ConditionClause:
    kind: str  # "volume" | "other"
    threshold: float
    effect_text: str
    evidence: tuple[EvidenceSpan, ...] = ()


@dataclass(frozen=True)
class SourceMeta:
    """Document facts needed downstream for precedence resolution."""

    doc_type: str = "master"
    signed: bool = False
    amendment_language: bool = False
    doc_effective_start: date | None = None


@dataclass(frozen=True)
class ConstraintRecord:
    doc_id: str
    supplier_id: str
    part_id: str
    scope: Scope = Scope()
    effective_start: date | None = None
    effective_end: date | None = None
    moq: int | None = None
    moq_explicit_null: bool = False
    lead_time: LeadTimeSpec | None = None
    capacity_per_period: int | None = None
    capacity_rate_unit: str = "period"  # clause's own rate basis
    price_tiers: tuple[PriceTier, ...] = ()
    substitution_policy: str | None = None
    conditions: tuple[ConditionClause, ...] = ()
    evidence: dict[str, tuple[EvidenceSpan, ...]] = field(default_factory=dict)
    confidence: dict[str, float] = field(default_factory=dict)
    source: SourceMeta = SourceMeta()
    version: str = "v1"

    def populated_fields(self) -> tuple[str, ...]:
        out = []
        if self.moq is not None or self.moq_explicit_null:
            out.append("moq")
        if self.lead_time is not None:
            out.append("lead_time")
        if self.capacity_per_period is not None:
            out.append("capacity_per_period")
        if self.price_tiers:
            out.append("price_tiers")
        if self.substitution_policy is not None:
            out.append("substitution_policy")
        return tuple(out)


@dataclass(frozen=True)
class NormalizedConstraint:
    """ConstraintRecord with durations in integral planning periods and
    canonical master identifiers."""

    doc_id: str
    supplier_id: str
    part_id: str
    scope: Scope
    effective_start: date | None
    effective_end: date | None
    moq: int | None
    moq_explicit_null: bool
    lead_time: LeadTimeSpec | None  # durations carry unit "periods"
    capacity_per_period: int | None
    capacity_rate_unit: str
    price_tiers: tuple[PriceTier, ...]
    substitution_policy: str | None
    conditions: tuple[ConditionClause, ...]
    evidence: dict[str, tuple[EvidenceSpan, ...]]
    confidence: dict[str, float]
    source: SourceMeta
    version: str
    notes: tuple[str, ...] = ()

    populated_fields = ConstraintRecord.populated_fields

    def lead_periods(self) -> int | None:
        return int(self.lead_time.standard.value) if self.lead_time else None

    def peak_lead_periods(self) -> int | None:
        if self.lead_time and self.lead_time.peak is not None:
            return int(self.lead_time.peak.value)
        return None


# -- master data ---------------------------------------------------------------


@dataclass(frozen=True)
class AvlEntry:
    part_id: str
    substitute_part_id: str
    approval_evidence: EvidenceSpan | None = None


@dataclass(frozen=True)
class Calendar:
    period_length_days: int = WEEK_DAYS


@dataclass(frozen=True)
class MasterData:
    suppliers: dict[str, tuple[str, ...]]  # canonical id -> aliases
    parts: dict[str, tuple[str, ...]]
    avl: tuple[AvlEntry, ...] = ()
    calendar: Calendar = Calendar()

    def _lookup(self, table: dict[str, tuple[str, ...]], name: str) -> tuple[str, ...]:
        if name in table:
            return (name,)
        hits = [canon for canon, aliases in sorted(table.items()) if name in aliases]
        return tuple(hits)

    def resolve_supplier(self, name: str) -> tuple[str, ...]:
        return self._lookup(self.suppliers, name)

    def resolve_part(self, name: str) -> tuple[str, ...]:
        return self._lookup(self.parts, name)

    def approval_for(self, part_id: str, substitute_id: str) -> EvidenceSpan | None:
        for entry in self.avl:
            if entry.part_id == part_id and entry.substitute_part_id == substitute_id:
                return entry.approval_evidence
        return None

    def has_avl_entry(self, part_id: str, substitute_id: str) -> bool:
        return any(
            e.part_id == part_id and e.substitute_part_id == substitute_id
            for e in self.avl
        )


def load_master(source: dict | str | Path) -> MasterData:
    """Load master data (suppliers, parts, AVL, calendar) from JSON."""
    if not isinstance(source, dict):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    avl = []
    for row in source.get("avl", []):
        evidence = row.get("approval_evidence")
        avl.append(AvlEntry(
            part_id=row["part_id"],
            substitute_part_id=row["substitute_part_id"],
            approval_evidence=(EvidenceSpan(**evidence) if evidence else None),
        ))
    calendar = Calendar(int(source.get("calendar", {}).get("period_length_days",
                                                           WEEK_DAYS)))
    return MasterData(
        suppliers={k: tuple(v) for k, v in source.get("suppliers", {}).items()},
        parts={k: tuple(v) for k, v in source.get("parts", {}).items()},
        avl=tuple(avl),
        calendar=calendar,
    )


# -- layer 1: schema validation --------------------------------------------------


@dataclass(frozen=True)
class Violation:
    field: str
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


def validate_schema(record: ConstraintRecord) -> ValidationReport:
    """Layer 1: identifiers, numeric sanity, tier monotonicity, windows,
    and the evidence-presence rule for every populated field."""
    out: list[Violation] = []

    if not record.supplier_id:
        out.append(Violation("supplier_id", "MISSING_IDENTIFIER", "supplier_id is empty"))
    if not record.part_id:
        out.append(Violation("part_id", "MISSING_IDENTIFIER", "part_id is empty"))

    for name in record.populated_fields():
        if not record.evidence.get(name):
            code = "EXPLICIT_NULL_WITHOUT_EVIDENCE" if (
                name == "moq" and record.moq_explicit_null
            ) else "UNGROUNDED_FIELD"
            out.append(Violation(name, code, f"{name} has no evidence spans"))

    if record.moq is not None and record.moq < 0:
        out.append(Violation("moq", "NEGATIVE_VALUE", f"moq {record.moq} < 0"))
    if record.capacity_per_period is not None and record.capacity_per_period <= 0:
        out.append(Violation("capacity_per_period", "NEGATIVE_VALUE",
                             "capacity must be positive"))

    tiers = record.price_tiers
    for tier in tiers:
        if tier.threshold < 1:
            out.append(Violation("price_tiers", "TIER_THRESHOLD_INVALID",
                                 f"threshold {tier.threshold} < 1"))
        if tier.unit_price <= 0:
            out.append(Violation("price_tiers", "NEGATIVE_VALUE",
                                 f"unit price {tier.unit_price} <= 0"))
    for a, b in zip(tiers, tiers[1:]):
        if not (a.threshold < b.threshold and a.unit_price > b.unit_price):
            out.append(Violation("price_tiers", "TIER_NOT_MONOTONE",
                                 f"tiers not monotone at threshold {b.threshold}"))
            break

    if record.lead_time is not None:
        if record.lead_time.standard.value < 0:
            out.append(Violation("lead_time", "NEGATIVE_VALUE", "negative lead time"))
        if (record.lead_time.peak is not None) != (record.lead_time.peak_window is not None):
            out.append(Violation("lead_time", "PEAK_WINDOW_MISMATCH",
                                 "peak value and peak window must come together"))

    if (record.effective_start and record.effective_end
            and record.effective_start > record.effective_end):
        out.append(Violation("effective_start", "WINDOW_INVALID",
                             "effective_start after effective_end"))

    if record.substitution_policy is not None \
            and record.substitution_policy not in SUBSTITUTION_POLICIES:
        out.append(Violation("substitution_policy", "BAD_ENUM",
                             f"unknown policy {record.substitution_policy!r}"))

    for cond in record.conditions:
        if not cond.effect_text or not cond.evidence:
            out.append(Violation("conditions", "CONDITION_INVALID",
                                 "condition needs effect text and evidence"))

    return ValidationReport(tuple(out))


# -- layer 2: grounding -----------------------------------------------------------

GROUNDED = "grounded"
VALUE_NOT_IN_SPAN = "value_not_in_span"
MIS_SCOPED = "mis_scoped"
MISSING = "missing"

_SCOPE_HEADER_RES = {
    "site": re.compile(r"Site scope:\s*([\w-]+)", re.IGNORECASE),
    "region": re.compile(r"Region:\s*([\w-]+)", re.IGNORECASE),
    "sku_family": re.compile(r"SKU family:\s*([\w-]+)", re.IGNORECASE),
}


@dataclass(frozen=True)
class GroundingReport:
    verdicts: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(v == GROUNDED for v in self.verdicts.values())

    def failing_fields(self) -> tuple[str, ...]:
        return tuple(sorted(f for f, v in self.verdicts.items() if v != GROUNDED))


def _field_tokens(record: ConstraintRecord, name: str) -> list[str]:
    """Numeric/keyword tokens that must occur in the resolved evidence text."""
    if name == "moq":
        if record.moq_explicit_null:
            return ["no moq|no minimum"]
        return [str(record.moq)]
    if name == "lead_time":
        toks = [f"{record.lead_time.standard.value:g}"]
        if record.lead_time.peak is not None:
            toks.append(f"{record.lead_time.peak.value:g}")
        return toks
    if name == "capacity_per_period":
        return [str(record.capacity_per_period)]
    if name == "price_tiers":
        toks = []
        for tier in record.price_tiers:
            toks.append(str(tier.threshold))
            toks.append(f"{tier.unit_price:.2f}")
        return toks
    if name == "substitution_policy":
        keywords = {
            "allowed": "allow|permitted",
            "forbidden": "forbid|prohibit|not permitted",
            "allowed_with_approval": "approval|approved",
        }
        return [keywords[record.substitution_policy]]
    return []


def _token_present(token: str, text: str) -> bool:
    lowered = text.lower()
    return any(alt in lowered for alt in token.lower().split("|"))


def _chunk_for_span(corpus: Corpus, span: EvidenceSpan):
    doc = corpus.document(span.doc_id, span.version)
    for chunk in doc.chunks:
        if chunk.span.start <= span.start and span.end <= chunk.span.end:
            return chunk
    return None


def _scope_consistent(record: ConstraintRecord, context: str) -> bool:
    for attr, pattern in _SCOPE_HEADER_RES.items():
        m = pattern.search(context)
        if m:
            declared = m.group(1)
            claimed = getattr(record.scope, attr)
            if claimed is not None and claimed != declared:
                return False
    return True


def check_grounding(record: ConstraintRecord, corpus: Corpus) -> GroundingReport:
    """Layer 2: no evidence, no effect. Values must occur inside their spans
    and span scope declarations must match the record's scope."""
    verdicts: dict[str, str] = {}
    for name in record.populated_fields():
        spans = record.evidence.get(name, ())
        if not spans:
            verdicts[name] = MISSING
            continue
        texts = [resolve_span(corpus, span) for span in spans]
        joined = "\n".join(texts)
        if not all(_token_present(tok, joined) for tok in _field_tokens(record, name)):
            verdicts[name] = VALUE_NOT_IN_SPAN
            continue
        contexts = []
        for span in spans:
            chunk = _chunk_for_span(corpus, span)
            contexts.append((chunk.header_context + "\n" + chunk.text) if chunk
                            else texts[0])
        if not all(_scope_consistent(record, ctx) for ctx in contexts):
            verdicts[name] = MIS_SCOPED
            continue
        verdicts[name] = GROUNDED
    return GroundingReport(verdicts)


# -- normalization ----------------------------------------------------------------


@dataclass(frozen=True)
class AmbiguityGate:
    """Returned instead of a NormalizedConstraint when an alias cannot be
    resolved to exactly one canonical master id."""

    kind: str  # "supplier" | "part"
    alias: str
    candidates: tuple[str, ...]


def _to_periods(duration: Duration, calendar: Calendar, notes: list[str],
                label: str) -> Duration:
    if duration.unit == "periods":
        return duration
    days = duration.days()
    exact = days / calendar.period_length_days
    periods = math.ceil(exact)
    if periods != exact:
        # round UP: restrictive direction for lead times / intervals
        notes.append(f"{label}: {days:g} days rounded up to {periods} periods")
    return Duration(float(periods), "periods")


def _capacity_to_period(value: int, rate_unit: str, calendar: Calendar,
                        notes: list[str]) -> int:
    rate_days = {"period": None, "week": WEEK_DAYS, "month": MONTH_DAYS}
    if rate_unit not in rate_days:
        raise UnitError(f"unknown capacity rate unit {rate_unit!r}")
    if rate_unit == "period":
        return value
    exact = value * calendar.period_length_days / rate_days[rate_unit]
    scaled = math.floor(exact)
    if scaled != exact:
        # round DOWN: restrictive direction for capacity
        notes.append(f"capacity: {value}/{rate_unit} rounded down to "
                     f"{scaled}/period")
    return scaled


def normalize(record: ConstraintRecord | NormalizedConstraint,
              master: MasterData) -> NormalizedConstraint | AmbiguityGate:
    """Convert durations to integral planning periods, canonicalize dates and
    master ids, and re-verify tier monotonicity. Idempotent on accepted records."""
    notes: list[str] = list(getattr(record, "notes", ()))

    suppliers = master.resolve_supplier(record.supplier_id)
    if len(suppliers) != 1:
        return AmbiguityGate("supplier", record.supplier_id, suppliers)
    parts = master.resolve_part(record.part_id)
    if len(parts) != 1:
        return AmbiguityGate("part", record.part_id, parts)

    lead = record.lead_time
    if lead is not None:
        std = _to_periods(lead.standard, master.calendar, notes, "standard lead")
        peak = (_to_periods(lead.peak, master.calendar, notes, "peak lead")
                if lead.peak is not None else None)
        lead = LeadTimeSpec(std, peak, lead.peak_window)

    capacity = record.capacity_per_period
    if capacity is not None:
        capacity = _capacity_to_period(capacity, record.capacity_rate_unit,
                                       master.calendar, notes)

    tiers = record.price_tiers
    for a, b in zip(tiers, tiers[1:]):
        if not (a.threshold < b.threshold and a.unit_price > b.unit_price):
            raise ValueError("tier monotonicity violated after normalization")

    return NormalizedConstraint(
        doc_id=record.doc_id,
        supplier_id=suppliers[0],
        part_id=parts[0],
        scope=record.scope,
        effective_start=record.effective_start,
        effective_end=record.effective_end,
        moq=record.moq,
        moq_explicit_null=record.moq_explicit_null,
        lead_time=lead,
        capacity_per_period=capacity,
        capacity_rate_unit="period",
        price_tiers=tiers,
        substitution_policy=record.substitution_policy,
        conditions=record.conditions,
        evidence=dict(record.evidence),
        confidence=dict(record.confidence),
        source=record.source,
        version=record.version,
        notes=tuple(dict.fromkeys(notes)),
    )


# -- JSON mirror of the extraction record shape ------------------------------------


def _span_to_json(span: EvidenceSpan) -> dict:
    return {"doc_id": span.doc_id, "version": span.version,
            "start": span.start, "end": span.end}


def _span_from_json(obj: dict) -> EvidenceSpan:
    return EvidenceSpan(obj["doc_id"], obj["version"], obj["start"], obj["end"])


def record_to_json(record: ConstraintRecord | NormalizedConstraint,
                   corpus: Corpus | None = None) -> dict:
    """Serialize using the walkthrough JSON field names, extended with
    per-field evidence spans, confidence, and (for normalized records) a
    `normalized` sub-record."""
    out: dict = {
        "doc_id": record.doc_id,
        "supplier_id": record.supplier_id,
        "part_id": record.part_id,
    }
    scope = {k: v for k, v in
             (("site", record.scope.site), ("region", record.scope.region),
              ("sku_family", record.scope.sku_family)) if v is not None}
    if scope:
        out["scope"] = scope
    if record.effective_start:
        out["effective_start"] = record.effective_start.isoformat()
    if record.effective_end:
        out["effective_end"] = record.effective_end.isoformat()
    if record.moq is not None or record.moq_explicit_null:
        out["moq"] = record.moq
    lead = record.lead_time
    if lead is not None:
        unit = lead.standard.unit
        entry: dict = {"standard": _num(lead.standard.value)}
        if lead.peak is not None:
            entry["peak_season"] = _num(lead.peak.value)
        if lead.peak_window is not None:
            entry["peak_window"] = lead.peak_window.display()
        out[f"lead_time_{unit}"] = entry
    if record.capacity_per_period is not None:
        out[f"capacity_per_{record.capacity_rate_unit}"] = record.capacity_per_period
    if record.price_tiers:
        out["price_tiers"] = [
            {"threshold": t.threshold, "unit_price": t.unit_price}
            for t in record.price_tiers
        ]
    if record.substitution_policy:
        out["substitution_policy"] = record.substitution_policy
    if record.conditions:
        out["conditions"] = [
            {"type": c.kind, "threshold": _num(c.threshold), "effect": c.effect_text}
            for c in record.conditions
        ]

    all_spans: list[EvidenceSpan] = []
    for name in sorted(record.evidence):
        all_spans.extend(record.evidence[name])
    for cond in record.conditions:
        all_spans.extend(cond.evidence)
    labels: list[str] = []
    for span in sorted(set(all_spans),
                       key=lambda s: (s.doc_id, s.version, s.start)):
        label = corpus.label_of(span) if corpus else None
        ref = f"{span.doc_id}:{label}" if label else span.key()
        if ref not in labels:
            labels.append(ref)
    out["evidence"] = labels
    out["evidence_spans"] = {
        name: [_span_to_json(s) for s in spans]
        for name, spans in sorted(record.evidence.items())
    }
    out["confidence"] = {k: record.confidence[k] for k in sorted(record.confidence)}
    out["source_meta"] = {
        "doc_type": record.source.doc_type,
        "signed": record.source.signed,
        "amendment_language": record.source.amendment_language,
        "doc_effective_start": (record.source.doc_effective_start.isoformat()
                                if record.source.doc_effective_start else None),
    }
    out["version"] = record.version

    if isinstance(record, NormalizedConstraint):
        normalized: dict = {}
        if record.lead_time is not None:
            entry = {"standard": int(record.lead_time.standard.value)}
            if record.lead_time.peak is not None:
                entry["peak_season"] = int(record.lead_time.peak.value)
            if record.lead_time.peak_window is not None:
                entry["peak_window"] = record.lead_time.peak_window.display()
            normalized["lead_time_periods"] = entry
        if record.capacity_per_period is not None:
            normalized["capacity_per_period"] = record.capacity_per_period
        if record.notes:
            normalized["notes"] = list(record.notes)
        out["normalized"] = normalized
    return out


def _num(value: float):
    return int(value) if float(value).is_integer() else value
