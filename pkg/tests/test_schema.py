from __future__ import annotations

import json
from dataclasses import replace
from datetime import date

import pytest

from clauseplan import fixture_path
from clauseplan.corpus import EvidenceSpan, load_corpus
from clauseplan.errors import UnitError
from clauseplan.extract import extract_fixture
from clauseplan.schema import (
    AmbiguityGate,
    Calendar,
    ConstraintRecord,
    Duration,
    LeadTimeSpec,
    MasterData,
    PriceTier,
    Scope,
    check_grounding,
    load_master,
    normalize,
    record_to_json,
    validate_schema,
)


@pytest.fixture(scope="module")
def walkthrough_record(walkthrough_corpus, master):
    records = extract_fixture(walkthrough_corpus, master)
    assert len(records) == 1
    return records[0]


# -- extraction -----------------------------------------------------------------


def test_walkthrough_extraction_matches_reference_record(walkthrough_record):
    r = walkthrough_record
    assert r.doc_id == "Addendum-3"
    assert r.supplier_id == "SUP-17"
    assert r.part_id == "88321"
    assert r.scope == Scope(site="MX-01")
    assert r.effective_start == date(2025, 5, 1)
    assert r.moq == 150
    assert r.lead_time.standard == Duration(6.0, "weeks")
    assert r.lead_time.peak == Duration(10.0, "weeks")
    assert r.lead_time.peak_window.display() == "Aug--Oct"
    assert r.capacity_per_period == 250
    assert r.capacity_rate_unit == "month"
    assert r.price_tiers == (PriceTier(100, 12.00), PriceTier(150, 11.30),
                             PriceTier(300, 10.90))
    assert len(r.conditions) == 1
    assert r.conditions[0].kind == "volume"
    assert r.conditions[0].threshold == 600
    assert r.confidence["moq"] == 1.0


def test_walkthrough_evidence_labels(walkthrough_record, walkthrough_corpus):
    as_json = record_to_json(walkthrough_record, walkthrough_corpus)
    assert as_json["evidence"] == [f"Addendum-3:L{i}" for i in range(1, 6)]
    assert as_json["lead_time_weeks"] == {
        "standard": 6, "peak_season": 10, "peak_window": "Aug--Oct"}
    assert as_json["capacity_per_month"] == 250
    assert as_json["conditions"] == [{
        "type": "volume", "threshold": 600,
        "effect": "moq=100 for subsequent POs in-quarter"}]


def test_master_only_corpus_extracts_baseline_terms(conflict_corpus, master):
    records = [r for r in extract_fixture(conflict_corpus, master)
               if r.doc_id == "Master-1"]
    assert len(records) == 1
    r = records[0]
    assert r.moq == 100
    assert r.lead_time.standard == Duration(6.0, "weeks")
    assert r.lead_time.peak is None
    assert r.price_tiers == ()


def test_empty_corpus_extracts_nothing(tmp_path, master):
    manifest = tmp_path / "corpus.json"
    manifest.write_text("[]", encoding="utf-8")
    assert extract_fixture(load_corpus(manifest), master) == []


# -- layer 1 validation ------------------------------------------------------------


def test_walkthrough_record_validates(walkthrough_record):
    assert validate_schema(walkthrough_record).ok


def test_out_of_order_tiers_flagged(walkthrough_record):
    bad = replace(walkthrough_record,
                  price_tiers=(PriceTier(150, 11.30), PriceTier(100, 12.00)))
    report = validate_schema(bad)
    assert "TIER_NOT_MONOTONE" in report.codes()


def test_ungrounded_field_flagged(walkthrough_record):
    evidence = dict(walkthrough_record.evidence)
    evidence["moq"] = ()
    report = validate_schema(replace(walkthrough_record, evidence=evidence))
    assert "UNGROUNDED_FIELD" in report.codes()
    assert not report.ok


def test_inverted_window_flagged(walkthrough_record):
    bad = replace(walkthrough_record,
                  effective_start=date(2025, 6, 1), effective_end=date(2025, 5, 1))
    assert "WINDOW_INVALID" in validate_schema(bad).codes()


# -- layer 2 grounding ---------------------------------------------------------------


def test_grounded_fields(walkthrough_record, walkthrough_corpus):
    report = check_grounding(walkthrough_record, walkthrough_corpus)
    assert report.ok
    assert set(report.verdicts) == {"moq", "lead_time", "capacity_per_period",
                                    "price_tiers"}


def test_value_not_in_span(walkthrough_record, walkthrough_corpus):
    report = check_grounding(replace(walkthrough_record, moq=175),
                             walkthrough_corpus)
    assert report.verdicts["moq"] == "value_not_in_span"


def test_mis_scoped_record(walkthrough_record, walkthrough_corpus):
    report = check_grounding(
        replace(walkthrough_record, scope=Scope(site="US-02")),
        walkthrough_corpus)
    assert report.verdicts["moq"] == "mis_scoped"


def test_missing_evidence_is_reported(walkthrough_record, walkthrough_corpus):
    evidence = dict(walkthrough_record.evidence)
    del evidence["capacity_per_period"]
    report = check_grounding(replace(walkthrough_record, evidence=evidence),
                             walkthrough_corpus)
    assert report.verdicts["capacity_per_period"] == "missing"


# -- normalization ----------------------------------------------------------------


def _master_with_calendar(days: int) -> MasterData:
    return MasterData(suppliers={"SUP-17": ()}, parts={"88321": ("MCU-17",)},
                      calendar=Calendar(days))


def _minimal_record(**kwargs) -> ConstraintRecord:
    span = EvidenceSpan("Addendum-3", "v1", 0, 1)
    defaults = dict(
        doc_id="Addendum-3", supplier_id="SUP-17", part_id="88321",
        lead_time=LeadTimeSpec(Duration(6.0, "weeks")),
        evidence={"lead_time": (span,)}, confidence={"lead_time": 1.0},
    )
    defaults.update(kwargs)
    return ConstraintRecord(**defaults)


def test_weeks_to_weekly_periods_identity():
    result = normalize(_minimal_record(), _master_with_calendar(7))
    assert result.lead_periods() == 6
    assert result.notes == ()


def test_ten_weeks_at_fortnight_periods_is_five():
    record = _minimal_record(lead_time=LeadTimeSpec(Duration(10.0, "weeks")))
    result = normalize(record, _master_with_calendar(14))
    assert result.lead_periods() == 5  # 70 days / 14-day period, exact
    assert result.notes == ()


def test_non_integral_lead_rounds_up_with_note():
    result = normalize(_minimal_record(), _master_with_calendar(30))
    assert result.lead_periods() == 2  # 42 days / 30 rounds up restrictively
    assert any("rounded up" in note for note in result.notes)


def test_monthly_capacity_scales_down_at_weekly_periods():
    span = EvidenceSpan("Addendum-3", "v1", 0, 1)
    record = _minimal_record(
        lead_time=None, capacity_per_period=250, capacity_rate_unit="month",
        evidence={"capacity_per_period": (span,)},
        confidence={"capacity_per_period": 1.0})
    result = normalize(record, _master_with_calendar(7))
    assert result.capacity_per_period == 58  # floor(250 * 7/30)
    assert any("rounded down" in note for note in result.notes)


def test_ambiguous_alias_gates():
    master = MasterData(
        suppliers={"SUP-17": ()},
        parts={"88321": ("MCU-17",), "88322": ("MCU-17",)},
        calendar=Calendar(7))
    result = normalize(_minimal_record(part_id="MCU-17"), master)
    assert isinstance(result, AmbiguityGate)
    assert result.kind == "part"
    assert result.candidates == ("88321", "88322")


def test_unknown_duration_unit_rejected():
    record = _minimal_record(lead_time=LeadTimeSpec(Duration(2.0, "fortnights")))
    with pytest.raises(UnitError):
        normalize(record, _master_with_calendar(7))


def test_normalization_idempotent(walkthrough_record, master):
    once = normalize(walkthrough_record, master)
    twice = normalize(once, master)
    assert once == twice


def test_alias_resolves_to_canonical_id(master):
    result = normalize(_minimal_record(part_id="MCU-17"), master)
    assert result.part_id == "88321"


def test_explicit_null_moq_extraction_and_grounding(tmp_path, master):
    doc = tmp_path / "open_terms.txt"
    doc.write_text(
        "SUPPLY AGREEMENT ADDENDUM No. 8\nSupplier: SUP-17\n\n"
        "L1. For Part #88321, no MOQ applies to purchase orders.\n",
        encoding="utf-8")
    manifest = tmp_path / "corpus.json"
    manifest.write_text(json.dumps([
        {"doc_id": "Addendum-8", "version": "v1", "doc_type": "addendum",
         "effective_start": "2025-05-01", "signed": True,
         "text_path": "open_terms.txt"}]), encoding="utf-8")
    corpus = load_corpus(manifest)
    records = extract_fixture(corpus, master)
    assert len(records) == 1
    record = records[0]
    assert record.moq is None
    assert record.moq_explicit_null
    assert validate_schema(record).ok
    assert check_grounding(record, corpus).verdicts["moq"] == "grounded"
    normalized = normalize(record, master)
    assert normalized.moq_explicit_null
