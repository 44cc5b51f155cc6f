"""Exception types shared across the pipeline."""

from __future__ import annotations


class ClausePlanError(Exception):
    """Base class for all package errors."""


# -- corpus ------------------------------------------------------------------


class MalformedManifest(ClausePlanError):
    pass


class DuplicateDocument(ClausePlanError):
    pass


class MissingText(ClausePlanError):
    pass


class UnknownDocument(ClausePlanError):
    pass


class OutOfRange(ClausePlanError):
    pass


# -- schema / normalization --------------------------------------------------


class UnitError(ClausePlanError):
    pass


# -- consolidation -----------------------------------------------------------


class NotClassA(ClausePlanError):
    """Conservative merge invoked on a field that is not Class A."""


class UnknownField(ClausePlanError):
    pass


# -- planning model ----------------------------------------------------------


class MissingConstraint(ClausePlanError):
    pass


class MultiNodeUnsupported(ClausePlanError):
    pass


class InstanceTooLarge(ClausePlanError):
    pass


class InfeasibleModel(ClausePlanError):
    """Raised by optimize() when no grid schedule satisfies the model.

    Carries the slack-minimization diagnosis.
    """

    def __init__(self, diagnosis):
        super().__init__("model is infeasible on the search grid")
        self.diagnosis = diagnosis


# -- orchestration -----------------------------------------------------------


class UnknownGate(ClausePlanError):
    pass


class ClosedGate(ClausePlanError):
    pass
