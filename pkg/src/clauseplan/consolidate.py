"""Conflict clustering, precedence resolution, conservative merging, and the
clause taxonomy with its abstention policy.

Clusters group field instances by (supplier, part, field, scope, effective
window). Conflicts resolve by precedence where possible; Class A conflicts
merge to the most restrictive candidate; everything else emits a gate
request. All functions are pure and gate ids derive from content hashes.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace
from datetime import date, timedelta

from .corpus import EvidenceSpan
from .errors import NotClassA, UnknownField
from .schema import LeadTimeSpec, MasterData, NormalizedConstraint, PriceTier

CLASS_A = "A_monotone"
CLASS_B = "B_eligibility"
CLASS_C = "C_unsafe"

LARGER = "larger_restrictive"
SMALLER = "smaller_restrictive"

_BASE_CLASS: dict[str, tuple[str, str | None]] = {
    "moq": (CLASS_A, LARGER),
    "lead_time": (CLASS_A, LARGER),
    "order_interval": (CLASS_A, LARGER),
    "capacity_per_period": (CLASS_A, SMALLER),
    "price_tiers": (CLASS_B, None),
    "substitution_policy": (CLASS_C, None),
    "penalty": (CLASS_C, None),
    "exception": (CLASS_C, None),
}

GATE_REASONS = ("grounding_failure", "class_c_conflict", "scope_unresolved",
                "approval_missing", "ambiguity")

_EFFECT_TARGET_RE = re.compile(r"^\s*(\w+)\s*=\s*(\d+(?:\.\d+)?)")


@dataclass(frozen=True)
class ClauseClass:
    value: str
    direction: str | None = None


@dataclass(frozen=True)
class Window:
    start: date | None = None
    end: date | None = None

    def _lo(self) -> date:
        return self.start or date.min

    def _hi(self) -> date:
        return self.end or date.max

    def covers(self, d: date) -> bool:
        return self._lo() <= d <= self._hi()

    def display(self) -> str:
        return f"[{self.start or '-inf'}, {self.end or '+inf'}]"


@dataclass(frozen=True)
class ClusterKey:
    supplier_id: str
    part_id: str
    field: str
    scope: tuple
    window: Window

    def sort_key(self) -> tuple:
        return (self.supplier_id, self.part_id, self.field,
                tuple(s or "" for s in self.scope),
                self.window._lo().isoformat(), self.window._hi().isoformat())

    def display(self) -> str:
        scope = ", ".join(s for s in self.scope if s) or "any"
        return (f"{self.field} on part {self.part_id} / supplier "
                f"{self.supplier_id} (scope {scope}, window {self.window.display()})")


@dataclass(frozen=True)
class Candidate:
    value: object
    display: str
    source: NormalizedConstraint
    spans: tuple[EvidenceSpan, ...]


@dataclass(frozen=True)
class ConflictCluster:
    key: ClusterKey
    candidates: tuple[Candidate, ...]
    overlap: bool = False

    def distinct_values(self) -> list[str]:
        return sorted({c.display for c in self.candidates})

    @property
    def is_conflict(self) -> bool:
        return len(self.distinct_values()) >= 2


@dataclass(frozen=True)
class Resolved:
    candidate: Candidate
    rule: str
    justification: str


@dataclass(frozen=True)
class Unresolved:
    reason: str


@dataclass(frozen=True)
class GateRequest:
    gate_id: str
    cluster: ConflictCluster
    question: str
    options: tuple[dict, ...]
    reason: str


@dataclass(frozen=True)
class ConsolidatedEntry:
    key: ClusterKey
    value: object
    display: str
    resolution: str  # single_source | precedence | conservative_merge | human_gate
    justification: str
    provenance: tuple[EvidenceSpan, ...]
    notes: tuple[str, ...] = ()
    note_spans: tuple[EvidenceSpan, ...] = ()  # evidence behind the notes
    attested: bool = False


@dataclass(frozen=True)
class ConsolidationPolicy:
    collapse_conditionals: bool = False
    allow_absent_moq: bool = False


@dataclass
class ConsolidatedConstraintSet:
    entries: dict[ClusterKey, ConsolidatedEntry]
    gated_keys: tuple[ClusterKey, ...] = ()

    def find(self, supplier_id: str, part_id: str, field_name: str,
             site: str | None = None, on: date | None = None) -> ConsolidatedEntry | None:
        hits = []
        for key in sorted(self.entries, key=ClusterKey.sort_key):
            if key.field != field_name:
                continue
            # "*" marks human-attested entries pinned without a source cluster
            if key.supplier_id not in ("*", supplier_id):
                continue
            if key.part_id not in ("*", part_id):
                continue
            key_site = key.scope[0]
            if key_site is not None and site is not None and key_site != site:
                continue
            if on is not None and not key.window.covers(on):
                continue
            hits.append(self.entries[key])
        return hits[-1] if hits else None  # latest-starting window wins

    def has_open_gate(self, supplier_id: str, part_id: str, field_name: str) -> bool:
        return any(
            (k.supplier_id, k.part_id, k.field) == (supplier_id, part_id, field_name)
            for k in self.gated_keys
        )


# -- field instance extraction ---------------------------------------------------


def _field_value(constraint: NormalizedConstraint, name: str) -> tuple[object, str]:
    if name == "moq":
        value = 0 if constraint.moq_explicit_null else int(constraint.moq)
        display = "no-MOQ" if constraint.moq_explicit_null else str(value)
        return value, display
    if name == "lead_time":
        lt = constraint.lead_time
        std = int(lt.standard.value)
        peak = int(lt.peak.value) if lt.peak is not None else None
        window = lt.peak_window.display() if lt.peak_window else None
        display = str(std) if peak is None else f"{std}/{peak} ({window})"
        return (std, peak, window), display
    if name == "capacity_per_period":
        return int(constraint.capacity_per_period), str(constraint.capacity_per_period)
    if name == "price_tiers":
        value = tuple((t.threshold, t.unit_price) for t in constraint.price_tiers)
        display = "; ".join(f">={t}: {p:.2f}" for t, p in value)
        return value, display
    if name == "substitution_policy":
        return constraint.substitution_policy, constraint.substitution_policy
    raise UnknownField(name)


def _conditions_targeting(constraint: NormalizedConstraint, name: str):
    out = []
    for cond in constraint.conditions:
        m = _EFFECT_TARGET_RE.match(cond.effect_text)
        if m and m.group(1) == name:
            out.append((cond, float(m.group(2))))
        elif not m and name == "moq" and "moq" in cond.effect_text.lower():
            out.append((cond, None))
    return out


def _condition_relaxes(field_name: str, base_value: object, effect_value: float | None) -> bool | None:
    """True if the conditional effect only loosens a Class A constraint.
    None when the direction cannot be determined."""
    if effect_value is None:
        return None
    cls, direction = _BASE_CLASS.get(field_name, (CLASS_C, None))
    if cls != CLASS_A:
        return None
    if field_name == "lead_time":
        base = float(base_value[0])
    elif isinstance(base_value, (int, float)):
        base = float(base_value)
    else:
        return None
    if direction == LARGER:
        return effect_value < base
    return effect_value > base


def classify(field_name: str, record: NormalizedConstraint,
             policy: ConsolidationPolicy | None = None) -> ClauseClass:
    """Taxonomy mapping; attached conditions escalate to Class C unless they
    can be conservatively collapsed under the active policy."""
    if field_name not in _BASE_CLASS:
        raise UnknownField(field_name)
    cls, direction = _BASE_CLASS[field_name]
    conds = _conditions_targeting(record, field_name)
    if conds:
        base_value, _ = _field_value(record, field_name)
        collapse_ok = policy is not None and policy.collapse_conditionals
        for cond, effect_value in conds:
            relaxes = _condition_relaxes(field_name, base_value, effect_value)
            if relaxes is not True or not collapse_ok:
                return ClauseClass(CLASS_C, None)
    return ClauseClass(cls, direction)


# -- clustering -------------------------------------------------------------------


def _windows_of(constraints: list[NormalizedConstraint]) -> list[Window]:
    return [Window(c.effective_start, c.effective_end) for c in constraints]


def _split_windows(windows: list[Window]) -> list[Window]:
    """Maximal disjoint sub-windows over all candidate windows."""
    bounds: set[date] = set()
    for w in windows:
        bounds.add(w._lo())
        if w._hi() != date.max:
            bounds.add(w._hi() + timedelta(days=1))
    points = sorted(bounds)
    out: list[Window] = []
    for i, start in enumerate(points):
        nxt = points[i + 1] if i + 1 < len(points) else None
        end = None if nxt is None else nxt - timedelta(days=1)
        out.append(Window(None if start == date.min else start, end))
    return out


def _window_contains(outer: Window, inner: Window) -> bool:
    return outer._lo() <= inner._lo() and inner._hi() <= outer._hi()


def cluster(constraints: list[NormalizedConstraint]) -> list[ConflictCluster]:
    """Exhaustive partition of populated field instances by applicability key;
    overlapping-but-unequal windows split into disjoint sub-windows."""
    groups: dict[tuple, list[NormalizedConstraint]] = {}
    for constraint in constraints:
        for name in constraint.populated_fields():
            key = (constraint.supplier_id, constraint.part_id, name,
                   constraint.scope.key())
            groups.setdefault(key, []).append(constraint)

    clusters: list[ConflictCluster] = []
    for (supplier, part, name, scope), members in sorted(
            groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        windows = _windows_of(members)
        distinct_windows = {(w._lo(), w._hi()) for w in windows}
        if len(distinct_windows) == 1:
            sub_windows = [windows[0]]
            overlap = False
        else:
            sub_windows = _split_windows(windows)
            overlap = True
        for sub in sub_windows:
            active = [
                (member, window) for member, window in zip(members, windows)
                if _window_contains(window, sub)
            ]
            if not active:
                continue
            candidates = []
            for member, _window in active:
                value, display = _field_value(member, name)
                candidates.append(Candidate(
                    value=value, display=display, source=member,
                    spans=member.evidence.get(name, ()),
                ))
            clusters.append(ConflictCluster(
                key=ClusterKey(supplier, part, name, scope, sub),
                candidates=tuple(candidates),
                overlap=overlap and len(active) > 1,
            ))
    return clusters


# -- precedence -------------------------------------------------------------------


def _doc_rank(candidate: Candidate) -> int:
    src = candidate.source.source
    if src.doc_type == "addendum" and src.signed:
        return 3
    if src.doc_type == "master":
        return 2
    if src.doc_type == "email":
        return 1
    return 0


def resolve_precedence(cluster: ConflictCluster) -> Resolved | Unresolved:
    """Apply, in order: newer effective date, explicit amendment language,
    document-type ranking. Unresolved when no rule discriminates."""
    candidates = list(cluster.candidates)

    starts = [c.source.effective_start or date.min for c in candidates]
    latest = max(starts)
    leaders = [c for c, s in zip(candidates, starts) if s == latest]
    if len({c.display for c in leaders}) == 1 and len(leaders) < len(candidates):
        winner = leaders[0]
        return Resolved(winner, "effective_date",
                        f"effective {latest.isoformat()} supersedes older sources")

    flagged = [c for c in candidates if c.source.source.amendment_language]
    if flagged and len({c.display for c in flagged}) == 1 and len(flagged) < len(candidates):
        return Resolved(flagged[0], "amendment_language",
                        "explicit amendment language supersedes")

    ranks = [_doc_rank(c) for c in candidates]
    top = max(ranks)
    leaders = [c for c, r in zip(candidates, ranks) if r == top]
    if len({c.display for c in leaders}) == 1 and len(leaders) < len(candidates):
        names = {3: "signed addendum", 2: "master agreement", 1: "email", 0: "other"}
        return Resolved(leaders[0], "document_type",
                        f"document-type ranking: {names[top]} outranks others")

    return Unresolved("no precedence rule discriminates")


# -- conservative merge -----------------------------------------------------------


def _merge_scalar(values: list[int], direction: str) -> int:
    return max(values) if direction == LARGER else min(values)


def conservative_merge(cluster: ConflictCluster,
                       clause: ClauseClass) -> tuple[object, str, Candidate]:
    """Most-restrictive value across candidates (max for larger-restrictive
    fields, min for capacity). Returns (value, display, provenance candidate)."""
    if clause.value != CLASS_A:
        raise NotClassA(f"conservative merge on class {clause.value} field "
                        f"{cluster.key.field!r}")
    candidates = list(cluster.candidates)
    if cluster.key.field == "lead_time":
        std = max(c.value[0] for c in candidates)
        peaks = [c.value[1] for c in candidates if c.value[1] is not None]
        peak = max(peaks) if peaks else None
        windows = [c.value[2] for c in candidates if c.value[2] is not None]
        window = windows[0] if windows else None
        merged = (std, peak, window)
        display = str(std) if peak is None else f"{std}/{peak} ({window})"
        holders = [c for c in candidates if c.value[0] == std]
    else:
        merged = _merge_scalar([int(c.value) for c in candidates], clause.direction)
        display = str(merged)
        holders = [c for c in candidates if int(c.value) == merged]
    # provenance tie-break: most recent effective_start among value holders
    provenance = max(holders,
                     key=lambda c: (c.source.effective_start or date.min).isoformat())
    return merged, display, provenance


# -- consolidation ----------------------------------------------------------------


def _gate_id(key: ClusterKey, detail: str) -> str:
    digest = hashlib.sha256(
        ("|".join(map(str, key.sort_key())) + "|" + detail).encode("utf-8")
    ).hexdigest()
    return f"gate-{digest[:12]}"


def _make_gate(cluster_: ConflictCluster, reason: str, question: str) -> GateRequest:
    options = []
    for idx, cand in enumerate(sorted(cluster_.candidates,
                                      key=lambda c: (c.display, c.source.doc_id))):
        options.append({
            "option_id": f"opt-{idx + 1}",
            "value": cand.display,
            "doc_id": cand.source.doc_id,
            "version": cand.source.version,
            "spans": [(s.doc_id, s.version, s.start, s.end) for s in cand.spans],
        })
    return GateRequest(
        gate_id=_gate_id(cluster_.key, reason + "|" + ";".join(cluster_.distinct_values())),
        cluster=cluster_,
        question=question,
        options=tuple(options),
        reason=reason,
    )


def _union_spans(candidates: tuple[Candidate, ...]) -> tuple[EvidenceSpan, ...]:
    seen: list[EvidenceSpan] = []
    for cand in candidates:
        for span in cand.spans:
            if span not in seen:
                seen.append(span)
    return tuple(seen)


def consolidate(
    constraints: list[NormalizedConstraint],
    policy: ConsolidationPolicy,
    master: MasterData | None = None,
    pinned: dict[ClusterKey, ConsolidatedEntry] | None = None,
) -> tuple[ConsolidatedConstraintSet, list[GateRequest]]:
    """cluster -> precedence -> Class A conservative merge -> gate.

    `pinned` carries entries fixed by earlier human gate resolutions; those
    clusters are never re-litigated.
    """
    pinned = pinned or {}
    entries: dict[ClusterKey, ConsolidatedEntry] = {}
    gates: list[GateRequest] = []
    gated_keys: list[ClusterKey] = []

    for cl in cluster(constraints):
        if cl.key in pinned:
            entries[cl.key] = pinned[cl.key]
            continue

        # conditional clauses: collapse when provably relaxing, else gate
        notes: list[str] = []
        condition_spans: list[EvidenceSpan] = []
        gated_by_condition = False
        for cand in cl.candidates:
            for cond, effect_value in _conditions_targeting(cand.source, cl.key.field):
                relaxes = _condition_relaxes(cl.key.field, cand.value, effect_value)
                if relaxes is True and policy.collapse_conditionals:
                    notes.append(
                        f"conditional collapsed: enforcing {cl.key.field}="
                        f"{cand.display}; relaxation '{cond.effect_text}' ignored"
                    )
                    condition_spans.extend(cond.evidence)
                else:
                    gates.append(_make_gate(
                        cl, "class_c_conflict",
                        f"Conditional clause on {cl.key.display()} requires review: "
                        f"'{cond.effect_text}' (threshold {cond.threshold:g}). "
                        f"Enforce the unconditioned value or encode the condition?",
                    ))
                    gated_keys.append(cl.key)
                    gated_by_condition = True
                    break
            if gated_by_condition:
                break
        if gated_by_condition:
            continue

        if not cl.is_conflict:
            cand = cl.candidates[0]
            entries[cl.key] = ConsolidatedEntry(
                key=cl.key, value=cand.value, display=cand.display,
                resolution="single_source",
                justification=f"single source {cand.source.doc_id}",
                provenance=_union_spans(cl.candidates) + tuple(condition_spans),
                notes=tuple(notes),
                note_spans=tuple(condition_spans),
            )
            continue

        resolution = resolve_precedence(cl)
        if isinstance(resolution, Resolved):
            cand = resolution.candidate
            entries[cl.key] = ConsolidatedEntry(
                key=cl.key, value=cand.value, display=cand.display,
                resolution="precedence",
                justification=f"{resolution.justification} "
                              f"(winner {cand.source.doc_id}, rule {resolution.rule})",
                provenance=cand.spans + tuple(condition_spans),
                notes=tuple(notes),
                note_spans=tuple(condition_spans),
            )
            continue

        clause = classify(cl.key.field, cl.candidates[0].source, policy)
        if clause.value == CLASS_A:
            merged, display, prov = conservative_merge(cl, clause)
            entries[cl.key] = ConsolidatedEntry(
                key=cl.key, value=merged, display=display,
                resolution="conservative_merge",
                justification="conservative merge of candidates "
                              f"{{{', '.join(cl.distinct_values())}}} "
                              f"-> {display} (most restrictive)",
                provenance=_union_spans(cl.candidates) + tuple(condition_spans),
                notes=tuple(notes),
                note_spans=tuple(condition_spans),
            )
            continue

        reason = "class_c_conflict" if clause.value == CLASS_C else "ambiguity"
        gates.append(_make_gate(
            cl, reason,
            f"Which source is authoritative for {cl.key.display()}? "
            f"Candidates: {', '.join(cl.distinct_values())}.",
        ))
        gated_keys.append(cl.key)

    # pinned resolutions for clusters that no longer exist (attested values,
    # approvals) still enter the consolidated set
    for key, entry in pinned.items():
        entries.setdefault(key, entry)

    # substitution policies needing approval evidence conservatively compile
    # to forbidden when the AVL carries none
    for key in sorted(entries, key=ClusterKey.sort_key):
        entry = entries[key]
        if key.field != "substitution_policy" or entry.attested:
            continue
        if entry.value in ("allowed", "allowed_with_approval"):
            approved = master is not None and any(
                e.part_id == key.part_id and e.approval_evidence is not None
                for e in master.avl
            )
            if not approved:
                entries[key] = replace(
                    entry,
                    value="forbidden", display="forbidden",
                    justification=entry.justification
                    + "; no approval evidence in AVL -> conservatively forbidden",
                    notes=entry.notes + ("substitution requires approval evidence",),
                )

    return ConsolidatedConstraintSet(entries, tuple(gated_keys)), gates


# -- serialization ----------------------------------------------------------------


def _value_to_json(field_name: str, value: object):
    if field_name == "lead_time":
        std, peak, window = value
        out = {"standard": std}
        if peak is not None:
            out["peak_season"] = peak
        if window is not None:
            out["peak_window"] = window
        return out
    if field_name == "price_tiers":
        return [{"threshold": t, "unit_price": p} for t, p in value]
    return value


def consolidated_to_json(conset: ConsolidatedConstraintSet) -> dict:
    entries = []
    for key in sorted(conset.entries, key=ClusterKey.sort_key):
        entry = conset.entries[key]
        entries.append({
            "supplier_id": key.supplier_id,
            "part_id": key.part_id,
            "field": key.field,
            "scope": {"site": key.scope[0], "region": key.scope[1],
                      "sku_family": key.scope[2]},
            "window": {"start": key.window.start.isoformat() if key.window.start else None,
                       "end": key.window.end.isoformat() if key.window.end else None},
            "value": _value_to_json(key.field, entry.value),
            "display": entry.display,
            "resolution": entry.resolution,
            "justification": entry.justification,
            "provenance": [
                {"doc_id": s.doc_id, "version": s.version, "start": s.start, "end": s.end}
                for s in entry.provenance
            ],
            "notes": list(entry.notes),
            "attested": entry.attested,
        })
    return {
        "entries": entries,
        "open_gate_keys": [
            {"supplier_id": k.supplier_id, "part_id": k.part_id, "field": k.field}
            for k in conset.gated_keys
        ],
    }
