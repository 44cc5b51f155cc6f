"""Clause-grounded procurement planning.

Turns typed, evidence-grounded contract constraints into solver-checked
replenishment plans with auditable decision cards, plus an exact-enumeration
benchmark quantifying the regret and compliance risk of unverified
constraint extraction.
"""

from importlib import resources as _resources
from pathlib import Path as _Path

__version__ = "0.1.0"


def fixture_path(name: str) -> _Path:
    """Path of a bundled fixture file (corpus manifests, documents, master
    data, the small walkthrough instance)."""
    return _Path(str(_resources.files(__name__) / "fixtures" / name))
