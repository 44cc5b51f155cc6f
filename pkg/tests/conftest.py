from __future__ import annotations

import pytest

from clauseplan import fixture_path
from clauseplan.consolidate import (
    ClusterKey,
    ConsolidatedConstraintSet,
    ConsolidatedEntry,
    Window,
)
from clauseplan.corpus import EvidenceSpan, load_corpus
from clauseplan.schema import load_master


@pytest.fixture(scope="session")
def walkthrough_corpus():
    return load_corpus(fixture_path("corpus.json"))


@pytest.fixture(scope="session")
def conflict_corpus():
    return load_corpus(fixture_path("corpus_conflict.json"))


@pytest.fixture(scope="session")
def master():
    return load_master(fixture_path("master_data.json"))


def make_entry(supplier, part, field, value, display=None, site=None,
               provenance=None):
    if provenance is None:
        provenance = (EvidenceSpan("Doc", "v1", 0, 8),)
    key = ClusterKey(supplier, part, field, (site, None, None), Window())
    return key, ConsolidatedEntry(
        key=key, value=value, display=display or str(value),
        resolution="single_source", justification="test fixture",
        provenance=tuple(provenance))


def make_consolidated(*pairs) -> ConsolidatedConstraintSet:
    return ConsolidatedConstraintSet(dict(pairs))


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_acceptance(name: str, passed: bool) -> None:
    _ACCEPTANCE_RESULTS[name] = "PASS" if passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{_ACCEPTANCE_RESULTS[name]}] {name}")
