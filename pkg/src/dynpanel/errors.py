"""Exception hierarchy.

Two families: ``DataError`` for malformed or invalid inputs and
``NumericalError`` for estimation problems that are properties of the sample
(no switchers, vanished kernel weights, ...). The CLI maps them to distinct
exit codes.
"""

from __future__ import annotations


class DynPanelError(Exception):
    """Base class for all package errors."""


class DataError(DynPanelError):
    pass


class ParseError(DataError):
    pass


class MissingPeriod(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class RaggedPanel(DataError):
    pass


class PanelTooShort(DataError):
    pass


class InvalidSpec(DataError):
    pass


class NumericalError(DynPanelError):
    pass


class NoSwitchers(NumericalError):
    pass


class NoGammaSwitchers(NumericalError):
    pass


class AllWeightsZero(NumericalError):
    pass


class ResampleDegenerate(NumericalError):
    pass


class InsufficientMass(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass


class EmptySample(ValueError):
    pass
