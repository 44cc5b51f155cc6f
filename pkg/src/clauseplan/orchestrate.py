"""Verify/repair loop as an explicit state machine, plus decision cards and
gate lifecycle (suspend, resolve, resume).

A run is a deterministic function of (corpus, master data, instance, config,
recorded gate resolutions): gate ids derive from content hashes, resolutions
are appended to an immutable log, and replays reproduce byte-identical
outcome bundles. One run's state is mutated by at most one actor at a time;
distinct runs are independent.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .consolidate import (
    ClusterKey,
    ConflictCluster,
    ConsolidatedConstraintSet,
    ConsolidatedEntry,
    ConsolidationPolicy,
    GateRequest,
    Window,
    classify,
    cluster as consolidate_cluster,
    consolidate,
    conservative_merge,
    consolidated_to_json,
)
from .corpus import Corpus, EvidenceSpan, FieldQuery, KeywordRetriever, retrieve
from .errors import ClosedGate, InfeasibleModel, MissingConstraint, UnknownGate
from .extract import extract_fixture
from .kernels import ACTION_SET
from .planmodel import (
    Diagnosis,
    Feasible,
    Infeasible,
    Plan,
    PlanningInstance,
    PlanningModel,
    check_feasibility,
    compile as compile_model,
    diagnosis_to_json,
    optimize,
    plan_to_json,
    recheck_plan,
)
from .schema import (
    AmbiguityGate,
    MasterData,
    NormalizedConstraint,
    check_grounding,
    normalize,
    validate_schema,
)

_FAMILY_TO_FIELD = {
    "moq": "moq",
    "capacity": "capacity_per_period",
    "cadence": "order_interval",
}


@dataclass(frozen=True)
class PipelineConfig:
    i_max: int = 5
    policy: ConsolidationPolicy = ConsolidationPolicy()
    grid: tuple[int, ...] = ACTION_SET

    def to_json(self) -> dict:
        return {
            "i_max": self.i_max,
            "collapse_conditionals": self.policy.collapse_conditionals,
            "allow_absent_moq": self.policy.allow_absent_moq,
            "grid": list(self.grid),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        return cls(
            i_max=int(obj.get("i_max", 5)),
            policy=ConsolidationPolicy(
                collapse_conditionals=bool(obj.get("collapse_conditionals", False)),
                allow_absent_moq=bool(obj.get("allow_absent_moq", False)),
            ),
            grid=tuple(obj.get("grid", ACTION_SET)),
        )


@dataclass(frozen=True)
class HistoryEvent:
    iteration: int
    layer: str
    verdict: str
    detail: str


@dataclass(frozen=True)
class GateResolution:
    gate_id: str
    option_id: str | None = None
    attested_value: object = None
    note: str = ""
    resolved_by: str = "reviewer"
    resolved_at: str | None = None

    def to_json(self) -> dict:
        return {
            "gate_id": self.gate_id,
            "option_id": self.option_id,
            "attested_value": self.attested_value,
            "note": self.note,
            "resolved_by": self.resolved_by,
            "resolved_at": self.resolved_at,
        }


@dataclass(frozen=True)
class BindingConstraint:
    family: str
    value: str
    provenance: tuple[EvidenceSpan, ...]
    structural: bool = False
    human_attested: bool = False


@dataclass(frozen=True)
class DecisionCard:
    decision: str
    binding_constraints: tuple[BindingConstraint, ...]
    sensitivity_note: str
    conditional_collapse_notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class RepairAction:
    kind: str  # targeted_retrieve | conservative_merge | human_gate
    targets: tuple[str, ...] = ()


@dataclass
class RunState:
    run_id: str
    iteration: int = 0
    status: str = "running"  # running | gated | done | failed
    history: list[HistoryEvent] = field(default_factory=list)
    open_gates: list[GateRequest] = field(default_factory=list)
    resolutions: list[GateResolution] = field(default_factory=list)
    pinned: dict[ClusterKey, ConsolidatedEntry] = field(default_factory=dict)

    def log(self, layer: str, verdict: str, detail: str = "") -> None:
        self.history.append(HistoryEvent(self.iteration, layer, verdict, detail))


@dataclass
class Outcome:
    status: str
    run_id: str
    config: PipelineConfig
    plan: Plan | None = None
    cards: list[DecisionCard] = field(default_factory=list)
    consolidated: ConsolidatedConstraintSet | None = None
    model: PlanningModel | None = None
    gates: list[GateRequest] = field(default_factory=list)
    diagnosis: Diagnosis | None = None
    history: list[HistoryEvent] = field(default_factory=list)
    resolutions: list[GateResolution] = field(default_factory=list)


def select_repair_action(report, clusters=None) -> RepairAction:
    """Diagnosis or layer-report to repair action.

    Grounding/schema failures retrieve again for the failing fields, ordered
    by ascending confidence; an infeasibility whose dominant slack family is a
    Class A contract field backed by a conflicted cluster merges that cluster
    conservatively; everything else goes to a human.
    """
    if isinstance(report, dict):  # {field: confidence} from layers 1-2
        fields = tuple(sorted(report, key=lambda f: (report[f], f)))
        return RepairAction("targeted_retrieve", fields)
    if isinstance(report, Diagnosis):
        field_name = _FAMILY_TO_FIELD.get(report.dominant_family or "")
        if field_name and clusters:
            for cl in clusters:
                if cl.key.field == field_name and cl.is_conflict:
                    return RepairAction("conservative_merge", (cl.key.display(),))
        return RepairAction("human_gate")
    return RepairAction("human_gate")


def _content_digest(*parts: bytes) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(hashlib.sha256(part).digest())
    return digest.hexdigest()


def compute_run_id(corpus: Corpus, master: MasterData,
                   instance: PlanningInstance, config: PipelineConfig) -> str:
    parts = [json.dumps(config.to_json(), sort_keys=True).encode()]
    for key in sorted(corpus.documents):
        doc = corpus.documents[key]
        parts.append(("|".join(key)).encode())
        parts.append(doc.data)
    parts.append(repr(sorted(master.suppliers.items())).encode())
    parts.append(repr(sorted(master.parts.items())).encode())
    parts.append(repr(master.calendar).encode())
    parts.append(repr(instance).encode())
    return "run-" + _content_digest(*parts)[:16]


def _ambiguity_gate(gate: AmbiguityGate) -> GateRequest:
    key = ClusterKey(supplier_id="?", part_id=gate.alias, field=gate.kind,
                     scope=(None, None, None), window=Window())
    detail = f"ambiguous {gate.kind} alias {gate.alias!r} -> {list(gate.candidates)}"
    return GateRequest(
        gate_id="gate-" + hashlib.sha256(detail.encode()).hexdigest()[:12],
        cluster=ConflictCluster(key=key, candidates=()),
        question=f"Alias {gate.alias!r} maps to {len(gate.candidates)} canonical "
                 f"{gate.kind} ids {list(gate.candidates)}. Which applies?",
        options=tuple({"option_id": f"opt-{i + 1}", "value": c, "doc_id": "",
                       "version": "", "spans": []}
                      for i, c in enumerate(gate.candidates)),
        reason="ambiguity",
    )


def _absence_gate(line_display: str, field_name: str) -> GateRequest:
    key = ClusterKey(supplier_id=line_display.split("/")[0],
                     part_id=line_display.split("/")[-1],
                     field=field_name, scope=(None, None, None), window=Window())
    detail = f"absent {field_name} for {line_display}"
    return GateRequest(
        gate_id="gate-" + hashlib.sha256(detail.encode()).hexdigest()[:12],
        cluster=ConflictCluster(key=key, candidates=()),
        question=f"No {field_name} constraint was extracted for line "
                 f"{line_display} and policy does not admit its absence. "
                 "Confirm a value or allow absence.",
        options=(),
        reason="grounding_failure",
    )


def _grounding_gate(fields: list[str]) -> GateRequest:
    key = ClusterKey(supplier_id="*", part_id="*", field=fields[0],
                     scope=(None, None, None), window=Window())
    detail = "grounding|" + ",".join(sorted(fields))
    return GateRequest(
        gate_id="gate-" + hashlib.sha256(detail.encode()).hexdigest()[:12],
        cluster=ConflictCluster(key=key, candidates=()),
        question=f"Fields {sorted(fields)} failed schema or grounding checks "
                 "and targeted re-extraction did not move; confirm values "
                 "with evidence or correct the source documents.",
        options=(),
        reason="grounding_failure",
    )


def _iteration_gate(run_id: str, i_max: int) -> GateRequest:
    key = ClusterKey(supplier_id="*", part_id="*", field="pipeline",
                     scope=(None, None, None), window=Window())
    return GateRequest(
        gate_id="gate-" + hashlib.sha256(f"{run_id}|imax".encode()).hexdigest()[:12],
        cluster=ConflictCluster(key=key, candidates=()),
        question=f"Repair iteration limit {i_max} reached without a feasible "
                 "verified plan; the current constraint set needs review.",
        options=(),
        reason="ambiguity",
    )


class PipelineRun:
    """One verify/repair run over fixed inputs. Callers must serialize
    stepping and gate resolution per run; distinct runs are independent."""

    def __init__(self, corpus: Corpus, master: MasterData,
                 instance: PlanningInstance, config: PipelineConfig | None = None):
        self.corpus = corpus
        self.master = master
        self.instance = instance
        self.config = config or PipelineConfig()
        self.state = RunState(run_id=compute_run_id(corpus, master, instance,
                                                    self.config))
        self._outcome: Outcome | None = None

    # -- main loop ---------------------------------------------------------

    def run(self) -> Outcome:
        state = self.state
        policy = self.config.policy

        records = extract_fixture(self.corpus, self.master)
        state.log("extract", "ok", f"{len(records)} records")

        retry_rings = 0
        consolidated: ConsolidatedConstraintSet | None = None

        while state.iteration < self.config.i_max:
            state.iteration += 1

            # layer 1: schema
            schema_failures: dict[str, float] = {}
            for record in records:
                report = validate_schema(record)
                for violation in report.violations:
                    schema_failures[violation.field] = min(
                        schema_failures.get(violation.field, 1.0),
                        record.confidence.get(violation.field, 0.0))
            state.log("schema", "ok" if not schema_failures else "fail",
                      ", ".join(sorted(schema_failures)))

            # layer 2: grounding
            grounding_failures: dict[str, float] = {}
            if not schema_failures:
                for record in records:
                    report = check_grounding(record, self.corpus)
                    for fname in report.failing_fields():
                        grounding_failures[fname] = min(
                            grounding_failures.get(fname, 1.0),
                            record.confidence.get(fname, 0.0))
                state.log("grounding", "ok" if not grounding_failures else "fail",
                          ", ".join(sorted(grounding_failures)))

            if schema_failures or grounding_failures:
                failures = {**schema_failures, **grounding_failures}
                action = select_repair_action(failures)
                state.log("repair", action.kind,
                          "fields by ascending confidence: " + ", ".join(action.targets))
                retry_rings += 1
                retriever = KeywordRetriever(extra_rings=retry_rings)
                for fname in action.targets:
                    query_field = {"capacity_per_period": "capacity",
                                   "price_tiers": "price_tiers",
                                   "substitution_policy": "substitution",
                                   "lead_time": "lead_time"}.get(fname, "moq")
                    retrieve(self.corpus, FieldQuery(field=query_field), retriever)
                new_records = extract_fixture(self.corpus, self.master)
                if new_records == records and state.iteration > 1:
                    # deterministic re-extract cannot move; stop early
                    return self._gated([_grounding_gate(sorted(failures))],
                                       consolidated)
                records = new_records
                continue

            # normalization with ambiguity gating
            normalized: list[NormalizedConstraint] = []
            ambiguity_gates: list[GateRequest] = []
            for record in records:
                result = normalize(record, self.master)
                if isinstance(result, AmbiguityGate):
                    ambiguity_gates.append(_ambiguity_gate(result))
                else:
                    normalized.append(result)
            state.log("normalize", "ok" if not ambiguity_gates else "gated",
                      f"{len(normalized)} constraints")
            if ambiguity_gates:
                return self._gated(ambiguity_gates, consolidated)

            # layer 3: consistency / precedence / conservative merge
            consolidated, gates = consolidate(normalized, policy, self.master,
                                              pinned=state.pinned)
            state.log("consistency",
                      "ok" if not gates else "gated",
                      f"{len(consolidated.entries)} entries, {len(gates)} gates")
            if gates:
                return self._gated(gates, consolidated)

            # layer 4: compile + solver feasibility
            try:
                model = compile_model(consolidated, self.instance,
                                      grid=self.config.grid, policy=policy)
            except MissingConstraint as exc:
                state.log("compile", "gated", str(exc))
                line = str(exc).split("line ")[-1].split(" ")[0].rstrip(";")
                return self._gated([_absence_gate(line, "moq")], consolidated)
            state.log("compile", "ok", f"{len(model.constraints)} constraints")

            verdict = check_feasibility(model)
            if isinstance(verdict, Feasible):
                state.log("feasibility", "ok")
                plan = optimize(model)
                problems = recheck_plan(plan, model)
                if problems:
                    raise AssertionError(f"re-check failed: {problems}")
                state.log("optimize", "ok",
                          f"total cost {plan.total_cost:.2f}")
                cards = build_decision_cards(plan, model, consolidated,
                                             corpus=self.corpus)
                state.status = "done"
                return self._finish(Outcome(
                    status="done", run_id=state.run_id, config=self.config,
                    plan=plan, cards=cards, consolidated=consolidated,
                    model=model, history=state.history,
                    resolutions=list(state.resolutions)))

            diagnosis = verdict.diagnosis
            state.log("feasibility", "fail",
                      f"dominant family {diagnosis.dominant_family}")
            clusters = consolidate_cluster(normalized)
            action = select_repair_action(diagnosis, clusters)
            state.log("repair", action.kind, ", ".join(action.targets))

            if action.kind == "conservative_merge":
                progressed = False
                for cl in clusters:
                    if cl.key.display() in action.targets and cl.is_conflict:
                        clause = classify(cl.key.field, cl.candidates[0].source,
                                          policy)
                        merged, display, prov = conservative_merge(cl, clause)
                        entry = ConsolidatedEntry(
                            key=cl.key, value=merged, display=display,
                            resolution="conservative_merge",
                            justification="merged during infeasibility repair: "
                                          f"candidates {cl.distinct_values()}",
                            provenance=prov.spans)
                        current = consolidated.entries.get(cl.key)
                        if current is None or current.value != merged:
                            progressed = True
                        state.pinned[cl.key] = entry
                if progressed:
                    continue

            # human gate when a forbidden substitution might relieve, else fail
            if model.forbidden_sub and diagnosis.dominant_family in ("service",
                                                                     "balance"):
                gates = [self._approval_gate(pair) for pair in model.forbidden_sub]
                return self._gated(gates, consolidated)
            state.status = "failed"
            state.log("gate", "failed", "infeasible after repairs")
            return self._finish(Outcome(
                status="failed", run_id=state.run_id, config=self.config,
                consolidated=consolidated, model=model, diagnosis=diagnosis,
                history=state.history, resolutions=list(state.resolutions)))

        gate = _iteration_gate(state.run_id, self.config.i_max)
        return self._gated([gate], consolidated)

    # -- gate lifecycle ------------------------------------------------------

    def _approval_gate(self, pair: tuple[str, str]) -> GateRequest:
        primary, substitute = pair
        key = ClusterKey(supplier_id="*", part_id=primary,
                         field="substitution_policy",
                         scope=(self.instance.site, None, None), window=Window())
        return GateRequest(
            gate_id="gate-" + hashlib.sha256(
                f"approval|{primary}|{substitute}".encode()).hexdigest()[:12],
            cluster=ConflictCluster(key=key, candidates=()),
            question=f"The plan is infeasible and substitute {substitute} for "
                     f"{primary} lacks approval evidence. Approve the "
                     "substitution or confirm the shortage?",
            options=({"option_id": "opt-1", "value": "approve substitution",
                      "doc_id": "", "version": "", "spans": []},),
            reason="approval_missing",
        )

    def _gated(self, gates: list[GateRequest],
               consolidated: ConsolidatedConstraintSet | None) -> Outcome:
        state = self.state
        state.status = "gated"
        state.open_gates = list(gates)
        for gate in gates:
            state.log("gate", gate.reason, gate.question)
        return self._finish(Outcome(
            status="gated", run_id=state.run_id, config=self.config,
            consolidated=consolidated, gates=list(gates),
            history=state.history, resolutions=list(state.resolutions)))

    def _finish(self, outcome: Outcome) -> Outcome:
        self._outcome = outcome
        return outcome

    def resume(self, resolution: GateResolution) -> Outcome:
        """Record a gate resolution and re-enter the loop with the resolved
        cluster pinned. The deterministic extraction layers replay
        identically, so the effective re-entry point is the consistency
        layer; the iteration counter continues and is not reset."""
        state = self.state
        if any(r.gate_id == resolution.gate_id for r in state.resolutions):
            raise ClosedGate(f"gate {resolution.gate_id} already resolved")
        gate = next((g for g in state.open_gates
                     if g.gate_id == resolution.gate_id), None)
        if gate is None:
            raise UnknownGate(f"no open gate {resolution.gate_id}")
        if state.status != "gated":
            raise ClosedGate(f"run {state.run_id} is not gated")

        entry = self._entry_from_resolution(gate, resolution)
        if entry is not None:
            state.pinned[gate.cluster.key] = entry
        state.resolutions.append(resolution)
        state.open_gates = [g for g in state.open_gates
                            if g.gate_id != resolution.gate_id]
        state.log("resume", "ok",
                  f"gate {resolution.gate_id} resolved by {resolution.resolved_by}")
        if state.open_gates:
            state.status = "gated"
            return self._finish(Outcome(
                status="gated", run_id=state.run_id, config=self.config,
                gates=list(state.open_gates), history=state.history,
                resolutions=list(state.resolutions)))
        state.status = "running"
        return self.run()

    def _entry_from_resolution(self, gate: GateRequest,
                               resolution: GateResolution) -> ConsolidatedEntry | None:
        key = gate.cluster.key
        if resolution.option_id is not None:
            option = next((o for o in gate.options
                           if o["option_id"] == resolution.option_id), None)
            if option is None:
                raise ValueError(f"gate {gate.gate_id} has no option "
                                 f"{resolution.option_id!r}")
            if gate.reason == "approval_missing":
                return ConsolidatedEntry(
                    key=key, value="allowed_with_approval",
                    display="allowed_with_approval", resolution="human_gate",
                    justification=f"substitution approved via {gate.gate_id}: "
                                  f"{resolution.note}",
                    provenance=(), attested=True)
            candidate = next(
                (c for c in gate.cluster.candidates if c.display == option["value"]),
                None)
            if candidate is None:  # synthetic gates carry no candidates
                return None
            return ConsolidatedEntry(
                key=key, value=candidate.value, display=candidate.display,
                resolution="human_gate",
                justification=f"human resolution of {gate.gate_id}: "
                              f"{resolution.note or option['value']}",
                provenance=candidate.spans)
        if resolution.attested_value is None:
            raise ValueError("resolution needs option_id or attested_value")
        value = resolution.attested_value
        if key.field in ("moq", "capacity_per_period", "order_interval"):
            value = int(value)
        return ConsolidatedEntry(
            key=key, value=value, display=str(value),
            resolution="human_gate",
            justification=f"human-attested value for {gate.gate_id}: "
                          f"{resolution.note}",
            provenance=(), attested=True)


def run_pipeline(corpus: Corpus, master: MasterData, instance: PlanningInstance,
                 config: PipelineConfig | None = None) -> Outcome:
    return PipelineRun(corpus, master, instance, config).run()


# -- decision cards ---------------------------------------------------------------


def _grid_step_above(grid: tuple[int, ...], value: int) -> int | None:
    higher = [g for g in grid if g > value]
    return min(higher) if higher else None


def _grid_step_below(grid: tuple[int, ...], value: int) -> int | None:
    lower = [g for g in grid if 0 < g < value]
    return max(lower) if lower else None


def _resolve_changed(model: PlanningModel, line, mutate) -> str:
    """Re-solve with one binding constraint perturbed one grid step and report
    whether the order decisions change."""
    import copy

    perturbed = copy.deepcopy(model)
    desc = mutate(perturbed)
    if desc is None:
        return "no tighter grid step available"
    try:
        base = optimize(model)
        new = optimize(perturbed)
    except InfeasibleModel:
        return f"{desc} makes the model infeasible"
    if base.orders == new.orders:
        return f"{desc} does not change the plan"
    return f"{desc} changes the plan"


def build_decision_cards(plan: Plan, model: PlanningModel,
                         consolidated: ConsolidatedConstraintSet | None = None,
                         corpus: Corpus | None = None) -> list[DecisionCard]:
    """One card per nonzero order line (tier selection folded in) plus one per
    substitution decision. Binding = satisfied with equality: MOQ when
    x == MOQ, cap when x == Cap, the selected tier threshold while x sits in
    its bracket."""
    cards: list[DecisionCard] = []
    attested = set(model.attested_fields)

    def label(span: EvidenceSpan) -> str:
        name = corpus.label_of(span) if corpus else None
        return f"{span.doc_id}:{name}" if name else span.key()

    collapse_notes = []
    if consolidated is not None:
        for key in sorted(consolidated.entries, key=ClusterKey.sort_key):
            entry = consolidated.entries[key]
            for note in entry.notes:
                refs = ", ".join(label(s) for s in entry.note_spans)
                collapse_notes.append(f"{note} (evidence: {refs})" if refs else note)
    collapse_notes = list(dict.fromkeys(collapse_notes))

    for line, t, qty in plan.nonzero_orders():
        bindings: list[BindingConstraint] = []
        sensitivity = ""
        if model.moq[line] > 0 and qty == model.moq[line]:
            bindings.append(BindingConstraint(
                "moq", f"MOQ {model.moq[line]}",
                model.field_provenance.get((line, "moq"), ()),
                human_attested=(line, "moq") in attested))
            step = _grid_step_above(model.grid, model.moq[line])

            def bump_moq(m, line=line, step=step):
                if step is None:
                    return None
                m.moq[line] = step
                return f"raising MOQ one grid step (to {step})"

            sensitivity = _resolve_changed(model, line, bump_moq)
        cap = model.cap[line]
        if cap is not None and qty == cap:
            bindings.append(BindingConstraint(
                "capacity", f"cap {cap} per period",
                model.field_provenance.get((line, "capacity"), ()),
                human_attested=(line, "capacity") in attested))
            if not sensitivity:
                step = _grid_step_below(model.grid, cap)

                def drop_cap(m, line=line, step=step):
                    if step is None:
                        return None
                    m.cap[line] = step
                    return f"lowering the cap one grid step (to {step})"

                sensitivity = _resolve_changed(model, line, drop_cap)
        selected = plan.tier_selected.get((line, t))
        if selected is not None:
            tier = model.tiers[line][selected]
            bindings.append(BindingConstraint(
                "tier", f"tier threshold {tier.threshold} @ {tier.unit_price:.2f}",
                model.field_provenance.get((line, "tier"), ())))
            if not sensitivity:
                step = _grid_step_above(model.grid, tier.threshold)

                def bump_tier(m, line=line, k=selected, step=step):
                    if step is None:
                        return None
                    tiers = list(m.tiers[line])
                    tiers[k] = type(tiers[k])(step, tiers[k].unit_price)
                    m.tiers[line] = tuple(tiers)
                    return f"raising the tier threshold one grid step (to {step})"

                sensitivity = _resolve_changed(model, line, bump_tier)
        if not sensitivity:
            sensitivity = "no binding contract constraint; decision driven by cost"

        cards.append(DecisionCard(
            decision=f"Order {qty} units of part {line.part_id} from supplier "
                     f"{line.supplier_id} in period {t}",
            binding_constraints=tuple(bindings),
            sensitivity_note=sensitivity,
            conditional_collapse_notes=tuple(collapse_notes),
        ))

    for (primary, sub, t), qty in sorted(plan.substitution_use.items()):
        if qty <= 0:
            continue
        spans = model.allowed_sub.get((primary, sub), ())
        cards.append(DecisionCard(
            decision=f"Substitute {qty:g} units of {sub} for {primary} in period {t}",
            binding_constraints=(BindingConstraint(
                "substitution", f"{sub} approved for {primary}", tuple(spans)),),
            sensitivity_note="substitution permitted by approval evidence",
        ))
    return cards


# -- outcome bundle -----------------------------------------------------------------


def _span_json(span: EvidenceSpan) -> dict:
    return {"doc_id": span.doc_id, "version": span.version,
            "start": span.start, "end": span.end}


def cards_to_json(cards: list[DecisionCard], corpus: Corpus | None = None) -> list[dict]:
    out = []
    for card in cards:
        out.append({
            "decision": card.decision,
            "binding_constraints": [
                {
                    "family": b.family,
                    "value": b.value,
                    "provenance": [_span_json(s) for s in b.provenance],
                    "labels": [
                        f"{s.doc_id}:{corpus.label_of(s)}" if corpus and corpus.label_of(s)
                        else s.key()
                        for s in b.provenance
                    ],
                    "structural": b.structural,
                    "human_attested": b.human_attested,
                }
                for b in card.binding_constraints
            ],
            "sensitivity_note": card.sensitivity_note,
            "conditional_collapse_notes": list(card.conditional_collapse_notes),
        })
    return out


def gates_to_json(gates: list[GateRequest]) -> list[dict]:
    return [
        {
            "gate_id": g.gate_id,
            "question": g.question,
            "reason": g.reason,
            "field": g.cluster.key.field,
            "supplier_id": g.cluster.key.supplier_id,
            "part_id": g.cluster.key.part_id,
            "options": list(g.options),
        }
        for g in gates
    ]


def history_to_json(history: list[HistoryEvent]) -> list[dict]:
    return [
        {"iteration": e.iteration, "layer": e.layer, "verdict": e.verdict,
         "detail": e.detail}
        for e in history
    ]


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def write_outcome(outcome: Outcome, out_dir: str | Path,
                  corpus: Corpus | None = None,
                  inputs: dict | None = None) -> None:
    """Persist the outcome bundle: plan.json, cards.json, constraints.json,
    history.json, gates.json, plus the effective config and resolution log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump(out_dir / "run.json", {
        "run_id": outcome.run_id,
        "status": outcome.status,
    })
    config = outcome.config.to_json()
    if inputs:
        config["inputs"] = inputs
    _dump(out_dir / "config.json", config)
    _dump(out_dir / "history.json", history_to_json(outcome.history))
    _dump(out_dir / "gates.json", gates_to_json(outcome.gates))
    _dump(out_dir / "resolutions.json",
          [r.to_json() for r in outcome.resolutions])
    if outcome.consolidated is not None:
        _dump(out_dir / "constraints.json", consolidated_to_json(outcome.consolidated))
    if outcome.plan is not None:
        _dump(out_dir / "plan.json", plan_to_json(outcome.plan))
        _dump(out_dir / "cards.json", cards_to_json(outcome.cards, corpus))
    if outcome.model is not None:
        (out_dir / "model.txt").write_text(outcome.model.dump(), encoding="utf-8")
    if outcome.diagnosis is not None:
        _dump(out_dir / "diagnosis.json", diagnosis_to_json(outcome.diagnosis))
