"""Deterministic rule-based reference extractor for the bundled fixtures.

Pattern matches carry confidence 1.0; looser fallback patterns carry 0.5.
Every populated field points back at the chunk span it was read from.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date

from .corpus import Chunk, Corpus, Document
from .schema import (
    ConditionClause,
    ConstraintRecord,
    Duration,
    LeadTimeSpec,
    MasterData,
    PriceTier,
    Scope,
    SeasonWindow,
    SourceMeta,
)

_SUPPLIER_RE = re.compile(r"Supplier:\s*([\w-]+)")
_EFFECTIVE_RE = re.compile(r"Effective:\s*(\d{4}-\d{2}-\d{2})")
_SITE_RE = re.compile(r"Site scope:\s*([\w-]+)")
_PART_RE = re.compile(r"Part\s*#(\w+)")

_MOQ_EXACT = (
    re.compile(r"MOQ per PO line is\s+(\d+)\s+units"),
    re.compile(r"an MOQ of\s+(\d+)\s+units"),
)
_MOQ_FUZZY = re.compile(r"minimum order[^.\d]{0,40}(\d+)", re.IGNORECASE)
_MOQ_NULL = re.compile(r"no MOQ applies|no minimum order quantity", re.IGNORECASE)

_VOLUME_COND = re.compile(
    r"If cumulative quarterly volume[^.]*?at least\s+(\d+)\s+units,\s*"
    r"the MOQ is reduced to\s+(\d+)\s+units",
    re.IGNORECASE,
)

_LEAD_STANDARD = (
    re.compile(r"Standard lead time is\s+(\d+)\s+weeks"),
    re.compile(r"A\s+(\d+)-week lead time"),
)
_LEAD_PEAK = re.compile(
    r"Orders placed between\s+(\d{2})-(\w{3})\s+and\s+(\d{2})-(\w{3})\s+"
    r"incur lead time\s+(\d+)\s+weeks"
)

_TIER_RANGE = re.compile(r"(\d+)-+(\d+)\s+units:\s*\$([\d.]+)\s+each")
_TIER_OPEN = re.compile(r">=\s*(\d+)\s+units:\s*\$([\d.]+)\s+each")

_CAPACITY = re.compile(r"cap shipments to\s+(\d+)\s+units per\s+(month|week|period)")

_SUB_FORBIDDEN = re.compile(
    r"Substitution[^.]*?\b(?:is forbidden|is prohibited|is not permitted)",
    re.IGNORECASE,
)
_SUB_APPROVAL = re.compile(
    r"Substitution[^.]*?allowed\s+(?:only\s+)?with(?:\s+prior)?(?:\s+written)?\s+approval",
    re.IGNORECASE,
)
_SUB_ALLOWED = re.compile(r"Substitution[^.]*?\bis (?:allowed|permitted)\b", re.IGNORECASE)

_MONTHS = {"Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
           "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12}
_MONTH_END = (31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


@dataclass
class _Draft:
    """Mutable accumulator for one (supplier, part, document) record."""

    moq: int | None = None
    moq_explicit_null: bool = False
    lead_standard: int | None = None
    lead_peak: int | None = None
    peak_window: SeasonWindow | None = None
    capacity: int | None = None
    capacity_unit: str = "period"
    tiers: list[PriceTier] | None = None
    substitution: str | None = None
    conditions: list[ConditionClause] | None = None
    evidence: dict[str, list] | None = None
    confidence: dict[str, float] | None = None

    def add(self, field: str, chunk: Chunk, conf: float) -> None:
        self.evidence = self.evidence or {}
        self.confidence = self.confidence or {}
        self.evidence.setdefault(field, [])
        if chunk.span not in self.evidence[field]:
            self.evidence[field].append(chunk.span)
        self.confidence[field] = min(self.confidence.get(field, 1.0), conf)


def _chunk_mentions_part(chunk: Chunk, part: str, doc_parts: set[str]) -> bool:
    mentioned = set(_PART_RE.findall(chunk.text))
    return part in mentioned or not (mentioned & doc_parts)


def _scan_chunk(draft: _Draft, chunk: Chunk) -> None:
    text = chunk.text

    for pattern in _MOQ_EXACT:
        m = pattern.search(text)
        if m:
            draft.moq = int(m.group(1))
            draft.add("moq", chunk, 1.0)
            break
    else:
        if _MOQ_NULL.search(text):
            draft.moq_explicit_null = True
            draft.add("moq", chunk, 1.0)
        elif draft.moq is None and not _VOLUME_COND.search(text):
            m = _MOQ_FUZZY.search(text)
            if m:
                draft.moq = int(m.group(1))
                draft.add("moq", chunk, 0.5)

    m = _VOLUME_COND.search(text)
    if m:
        draft.conditions = draft.conditions or []
        draft.conditions.append(ConditionClause(
            kind="volume",
            threshold=float(m.group(1)),
            effect_text=f"moq={m.group(2)} for subsequent POs in-quarter",
            evidence=(chunk.span,),
        ))

    for pattern in _LEAD_STANDARD:
        m = pattern.search(text)
        if m:
            draft.lead_standard = int(m.group(1))
            draft.add("lead_time", chunk, 1.0)
            break
    m = _LEAD_PEAK.search(text)
    if m:
        start_day, start_mon, end_day, end_mon = (
            int(m.group(1)), _MONTHS[m.group(2)], int(m.group(3)), _MONTHS[m.group(4)])
        draft.lead_peak = int(m.group(5))
        draft.peak_window = SeasonWindow(start_mon, start_day, end_mon, end_day)
        draft.add("lead_time", chunk, 1.0)

    ranges = _TIER_RANGE.findall(text)
    open_tier = _TIER_OPEN.search(text)
    if ranges or open_tier:
        tiers = [PriceTier(int(lo), float(price)) for lo, _hi, price in ranges]
        if open_tier:
            tiers.append(PriceTier(int(open_tier.group(1)), float(open_tier.group(2))))
        draft.tiers = sorted(tiers, key=lambda t: t.threshold)
        draft.add("price_tiers", chunk, 1.0)

    m = _CAPACITY.search(text)
    if m:
        draft.capacity = int(m.group(1))
        draft.capacity_unit = m.group(2)
        draft.add("capacity_per_period", chunk, 1.0)

    if _SUB_FORBIDDEN.search(text):
        draft.substitution = "forbidden"
        draft.add("substitution_policy", chunk, 1.0)
    elif _SUB_APPROVAL.search(text):
        draft.substitution = "allowed_with_approval"
        draft.add("substitution_policy", chunk, 1.0)
    elif _SUB_ALLOWED.search(text):
        draft.substitution = "allowed"
        draft.add("substitution_policy", chunk, 1.0)


def _extract_document(doc: Document) -> list[ConstraintRecord]:
    full_text = doc.data.decode("utf-8")
    header = doc.chunks[0].header_context if doc.chunks else full_text

    supplier_m = _SUPPLIER_RE.search(full_text)
    if not supplier_m:
        return []
    supplier = supplier_m.group(1)

    doc_parts = set(_PART_RE.findall(full_text))
    if not doc_parts:
        return []

    effective = None
    m = _EFFECTIVE_RE.search(header)
    if m:
        effective = date.fromisoformat(m.group(1))
    elif doc.meta.effective_start:
        effective = doc.meta.effective_start

    site_m = _SITE_RE.search(full_text)
    scope = Scope(site=site_m.group(1)) if site_m else Scope()

    source = SourceMeta(
        doc_type=doc.meta.doc_type,
        signed=doc.meta.signed,
        amendment_language=doc.amendment_language,
        doc_effective_start=doc.meta.effective_start,
    )

    records = []
    for part in sorted(doc_parts):
        draft = _Draft()
        for chunk in doc.chunks:
            if _chunk_mentions_part(chunk, part, doc_parts):
                _scan_chunk(draft, chunk)
        if not draft.evidence and not draft.conditions:
            continue
        lead = None
        if draft.lead_standard is not None:
            lead = LeadTimeSpec(
                standard=Duration(float(draft.lead_standard), "weeks"),
                peak=(Duration(float(draft.lead_peak), "weeks")
                      if draft.lead_peak is not None else None),
                peak_window=draft.peak_window,
            )
        records.append(ConstraintRecord(
            doc_id=doc.meta.doc_id,
            supplier_id=supplier,
            part_id=part,
            scope=scope,
            effective_start=effective,
            effective_end=None,
            moq=draft.moq,
            moq_explicit_null=draft.moq_explicit_null,
            lead_time=lead,
            capacity_per_period=draft.capacity,
            capacity_rate_unit={"month": "month", "week": "week",
                                "period": "period"}[draft.capacity_unit],
            price_tiers=tuple(draft.tiers or ()),
            substitution_policy=draft.substitution,
            conditions=tuple(draft.conditions or ()),
            evidence={k: tuple(v) for k, v in sorted((draft.evidence or {}).items())},
            confidence=dict(sorted((draft.confidence or {}).items())),
            source=source,
            version=doc.meta.version,
        ))
    return records


def extract_fixture(corpus: Corpus, master: MasterData) -> list[ConstraintRecord]:
    """One record per (supplier, part, document) with matching clause patterns."""
    records: list[ConstraintRecord] = []
    for key in sorted(corpus.documents):
        records.extend(_extract_document(corpus.documents[key]))
    return records
