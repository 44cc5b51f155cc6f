from __future__ import annotations

import filecmp
import json
from pathlib import Path

import pytest

from conftest import make_consolidated, make_entry
from clauseplan import fixture_path
from clauseplan.consolidate import ConsolidationPolicy, cluster
from clauseplan.corpus import load_corpus
from clauseplan.errors import ClosedGate, UnknownGate
from clauseplan.extract import extract_fixture
from clauseplan.orchestrate import (
    GateResolution,
    PipelineConfig,
    PipelineRun,
    build_decision_cards,
    run_pipeline,
    select_repair_action,
    write_outcome,
)
from clauseplan.planmodel import Diagnosis, instance_from_json
from clauseplan.schema import load_master, normalize

COLLAPSE = PipelineConfig(policy=ConsolidationPolicy(collapse_conditionals=True))


@pytest.fixture(scope="module")
def instance():
    return instance_from_json(fixture_path("instance_small.json"))


def write_doc(tmp_path, name, text):
    (tmp_path / name).write_text(text, encoding="utf-8")


def make_corpus(tmp_path, entries):
    manifest = tmp_path / "corpus.json"
    manifest.write_text(json.dumps(entries), encoding="utf-8")
    return load_corpus(manifest)


# -- full pipeline -----------------------------------------------------------------


def test_walkthrough_pipeline_emits_plan_and_cited_cards(
        walkthrough_corpus, master, instance):
    outcome = run_pipeline(walkthrough_corpus, master, instance, COLLAPSE)
    assert outcome.status == "done"
    assert outcome.plan is not None
    moq_cards = [c for c in outcome.cards
                 if any(b.family == "moq" for b in c.binding_constraints)]
    assert moq_cards
    spans = [s for c in moq_cards for b in c.binding_constraints
             if b.family == "moq" for s in b.provenance]
    labels = {f"{s.doc_id}:{walkthrough_corpus.label_of(s)}" for s in spans}
    assert "Addendum-3:L1" in labels
    # conditional collapse note cites its evidence line
    assert any("Addendum-3:L2" in note for c in outcome.cards
               for note in c.conditional_collapse_notes)


def test_walkthrough_without_collapse_gates_on_conditional(
        walkthrough_corpus, master, instance):
    outcome = run_pipeline(walkthrough_corpus, master, instance,
                           PipelineConfig())
    assert outcome.status == "gated"
    assert [g.reason for g in outcome.gates] == ["class_c_conflict"]
    assert outcome.plan is None


def test_class_c_substitution_conflict_gates(tmp_path, master, instance):
    write_doc(tmp_path, "a.txt",
              "SUPPLY TERMS EMAIL ONE\nSupplier: SUP-17\n\n"
              "L1. For Part #88321, an MOQ of 100 units applies per PO line.\n\n"
              "L2. Substitution of Part #88321 is forbidden.\n")
    write_doc(tmp_path, "b.txt",
              "SUPPLY TERMS EMAIL TWO\nSupplier: SUP-17\n\n"
              "L1. For Part #88321 the MOQ per PO line is 150 units.\n\n"
              "L2. Substitution of Part #88321 is allowed with prior approval.\n")
    corpus = make_corpus(tmp_path, [
        {"doc_id": "EmailA", "version": "v1", "doc_type": "email",
         "effective_start": None, "signed": False, "text_path": "a.txt"},
        {"doc_id": "EmailB", "version": "v1", "doc_type": "email",
         "effective_start": None, "signed": False, "text_path": "b.txt"},
    ])
    outcome = run_pipeline(corpus, master, instance, COLLAPSE)
    assert outcome.status == "gated"
    assert any(g.reason == "class_c_conflict" for g in outcome.gates)
    # the Class A MOQ conflict merged rather than gating
    entry = outcome.consolidated.find("SUP-17", "88321", "moq")
    assert entry.value == 150
    assert entry.resolution == "conservative_merge"


def test_unmeetable_demand_fails_with_diagnosis(walkthrough_corpus, master):
    instance = instance_from_json({
        "suppliers": ["SUP-17"], "parts": ["88321"],
        "finished_goods": ["88321"], "horizon": 2,
        "demand": {"88321": {"1": 600, "2": 600}},
        "unit_cost": {"SUP-17": {"88321": 12.0}},
        "holding_cost": {"88321": 0.1},
        "site": "MX-01", "start_date": "2025-06-01", "period_days": 30,
    })
    outcome = run_pipeline(walkthrough_corpus, master, instance, COLLAPSE)
    assert outcome.status == "failed"
    assert outcome.diagnosis is not None
    assert outcome.diagnosis.dominant_family == "service"
    assert outcome.plan is None


def test_termination_within_iteration_budget(walkthrough_corpus, master, instance):
    outcome = run_pipeline(walkthrough_corpus, master, instance, COLLAPSE)
    assert outcome.status in ("done", "gated", "failed")
    assert all(e.iteration <= COLLAPSE.i_max for e in outcome.history)


# -- repair action selection ----------------------------------------------------


def test_grounding_failures_map_to_targeted_retrieve():
    action = select_repair_action({"lead_time": 0.5, "moq": 1.0})
    assert action.kind == "targeted_retrieve"
    assert action.targets[0] == "lead_time"  # ascending confidence first


def test_dominant_moq_with_conflicted_cluster_maps_to_merge(conflict_corpus, master):
    records = extract_fixture(conflict_corpus, master)
    normalized = [normalize(r, master) for r in records]
    clusters = cluster(normalized)
    diag = Diagnosis(slacks=(), weights={}, family_totals={"moq": 10.0},
                     dominant_family="moq")
    action = select_repair_action(diag, clusters)
    assert action.kind == "conservative_merge"
    assert "moq" in action.targets[0]


def test_service_dominance_without_contract_field_maps_to_gate():
    diag = Diagnosis(slacks=(), weights={}, family_totals={"service": 10.0},
                     dominant_family="service")
    assert select_repair_action(diag, []).kind == "human_gate"


# -- gate lifecycle ----------------------------------------------------------------


def test_resume_reaches_done_with_pinned_value(walkthrough_corpus, master, instance):
    run = PipelineRun(walkthrough_corpus, master, instance, PipelineConfig())
    outcome = run.run()
    assert outcome.status == "gated"
    gate = outcome.gates[0]
    resumed = run.resume(GateResolution(
        gate_id=gate.gate_id, option_id="opt-1",
        note="enforce the unconditioned MOQ",
        resolved_at="2025-06-02T09:00:00+00:00"))
    assert resumed.status == "done"
    orders = [q for q in resumed.plan.orders.values() if q]
    assert orders == [150]
    assert resumed.resolutions[0].gate_id == gate.gate_id


def test_resume_unknown_and_closed_gate(walkthrough_corpus, master, instance):
    run = PipelineRun(walkthrough_corpus, master, instance, PipelineConfig())
    outcome = run.run()
    gate = outcome.gates[0]
    with pytest.raises(UnknownGate):
        run.resume(GateResolution(gate_id="gate-nope", option_id="opt-1"))
    run.resume(GateResolution(gate_id=gate.gate_id, option_id="opt-1",
                              note="pick the addendum value"))
    with pytest.raises(ClosedGate):
        run.resume(GateResolution(gate_id=gate.gate_id, option_id="opt-1",
                                  note="double submit"))


def test_attested_resolution_marks_provenance(walkthrough_corpus, master, instance):
    run = PipelineRun(walkthrough_corpus, master, instance, PipelineConfig())
    outcome = run.run()
    gate = outcome.gates[0]
    resumed = run.resume(GateResolution(
        gate_id=gate.gate_id, attested_value=150,
        note="confirmed by procurement lead"))
    assert resumed.status == "done"
    entry = resumed.consolidated.find("SUP-17", "88321", "moq")
    assert entry.attested
    moq_bindings = [b for c in resumed.cards for b in c.binding_constraints
                    if b.family == "moq"]
    assert moq_bindings and all(b.human_attested for b in moq_bindings)


def test_run_id_is_deterministic(walkthrough_corpus, master, instance):
    a = PipelineRun(walkthrough_corpus, master, instance, COLLAPSE)
    b = PipelineRun(walkthrough_corpus, master, instance, COLLAPSE)
    assert a.state.run_id == b.state.run_id
    other = PipelineRun(walkthrough_corpus, master, instance, PipelineConfig())
    assert other.state.run_id != a.state.run_id


# -- safety and replay ---------------------------------------------------------------


def test_no_plan_without_feasible_verdict(walkthrough_corpus, master, instance):
    outcome = run_pipeline(walkthrough_corpus, master, instance, COLLAPSE)
    layers = [(e.layer, e.verdict) for e in outcome.history
              if e.iteration == max(e.iteration for e in outcome.history)]
    assert ("feasibility", "ok") in layers
    assert layers.index(("feasibility", "ok")) < layers.index(("optimize", "ok"))


def _bundle_files(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())
            if p.is_file()}


def test_replay_produces_byte_identical_bundles(tmp_path, walkthrough_corpus,
                                                master, instance):
    resolution = GateResolution(
        gate_id="", option_id="opt-1", note="enforce unconditioned MOQ",
        resolved_at="2025-06-02T09:00:00+00:00")
    dirs = []
    for name in ("one", "two"):
        run = PipelineRun(walkthrough_corpus, master, instance, PipelineConfig())
        outcome = run.run()
        gate_id = outcome.gates[0].gate_id
        outcome = run.resume(GateResolution(
            gate_id=gate_id, option_id=resolution.option_id,
            note=resolution.note, resolved_at=resolution.resolved_at))
        out_dir = tmp_path / name
        write_outcome(outcome, out_dir, corpus=walkthrough_corpus)
        dirs.append(out_dir)
    a, b = (_bundle_files(d) for d in dirs)
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], f"{name} differs between replays"


def test_decision_card_sensitivity_on_toy_variant():
    from test_planmodel import single_item_instance, toy_consolidated, LINE
    from clauseplan.planmodel import compile as compile_model, optimize

    inst = single_item_instance(emergency=30.0)
    model = compile_model(toy_consolidated(moq=100, lead=2), inst,
                          grid=(0, 50, 100, 150, 200, 300, 400, 450, 600))
    plan = optimize(model)
    assert plan.orders[(LINE, 1)] == 100  # ordering beats pure emergency here
    cards = build_decision_cards(plan, model)
    moq_card = next(c for c in cards
                    if any(b.family == "moq" for b in c.binding_constraints))
    assert "changes the plan" in moq_card.sensitivity_note


def test_zero_order_plan_yields_zero_cards(walkthrough_corpus, master):
    instance = instance_from_json({
        "suppliers": ["SUP-17"], "parts": ["88321"],
        "finished_goods": ["88321"], "horizon": 2,
        "demand": {},
        "unit_cost": {"SUP-17": {"88321": 12.0}},
        "emergency_cost": {"88321": 25.0},
        "holding_cost": {"88321": 0.1},
        "site": "MX-01", "start_date": "2025-06-01", "period_days": 30,
    })
    outcome = run_pipeline(walkthrough_corpus, master, instance, COLLAPSE)
    assert outcome.status == "done"
    assert outcome.plan.total_cost == 0.0
    assert outcome.cards == []


# -- repair loop on persistent layer failures ------------------------------------


def _broken_tier_corpus(tmp_path):
    # tier prices increase with thresholds: a persistent layer-1 violation
    write_doc(tmp_path, "bad.txt",
              "SUPPLY AGREEMENT ADDENDUM No. 9\nSupplier: SUP-17\n\n"
              "L1. For Part #88321 the MOQ per PO line is 150 units.\n\n"
              "L2. Exhibit B Price Schedule (per PO line). "
              "100-149 units: $10.00 each; 150-299 units: $11.30 each.\n")
    return make_corpus(tmp_path, [
        {"doc_id": "Addendum-9", "version": "v1", "doc_type": "addendum",
         "effective_start": "2025-05-01", "signed": True,
         "text_path": "bad.txt"}])


def test_persistent_schema_failure_ends_in_grounding_gate(tmp_path, master,
                                                          instance):
    corpus = _broken_tier_corpus(tmp_path)
    outcome = run_pipeline(corpus, master, instance, COLLAPSE)
    assert outcome.status == "gated"
    assert outcome.gates[0].reason == "grounding_failure"
    repairs = [e for e in outcome.history if e.layer == "repair"]
    assert repairs and repairs[0].verdict == "targeted_retrieve"


def test_iteration_budget_exhaustion_gates(tmp_path, master, instance):
    corpus = _broken_tier_corpus(tmp_path)
    config = PipelineConfig(
        i_max=1, policy=ConsolidationPolicy(collapse_conditionals=True))
    outcome = run_pipeline(corpus, master, instance, config)
    assert outcome.status == "gated"
    assert all(e.iteration <= 1 for e in outcome.history)


def test_unknown_part_gates_as_ambiguity(tmp_path, instance, master):
    write_doc(tmp_path, "doc.txt",
              "SUPPLY AGREEMENT ADDENDUM No. 4\nSupplier: SUP-17\n\n"
              "L1. For Part #99999 the MOQ per PO line is 150 units.\n")
    corpus = make_corpus(tmp_path, [
        {"doc_id": "Addendum-4", "version": "v1", "doc_type": "addendum",
         "effective_start": "2025-05-01", "signed": True,
         "text_path": "doc.txt"}])
    outcome = run_pipeline(corpus, master, instance, COLLAPSE)
    assert outcome.status == "gated"
    assert outcome.gates[0].reason == "ambiguity"
    assert "99999" in outcome.gates[0].question
