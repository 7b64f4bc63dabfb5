"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class InfluenceLedgerError(ValueError):
    exit_code = 1


class InvalidInputError(InfluenceLedgerError):
    """Malformed items, model configs, pair specs or run configuration."""

    exit_code = 2


class DegenerateDataError(InfluenceLedgerError):
    exit_code = 3


class TieError(DegenerateDataError):
    def __init__(self, message: str, pairs: list[tuple[int, int]] | None = None):
        super().__init__(message)
        self.pairs = list(pairs or [])


class EmptySupportError(DegenerateDataError):
    pass


class UninformativePairError(DegenerateDataError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class ModelEvaluationError(DegenerateDataError):
    pass


class GeometryError(InfluenceLedgerError):
    exit_code = 4


class AttributionError(InfluenceLedgerError):
    exit_code = 5


class EdgeFieldError(InfluenceLedgerError):
    exit_code = 6


class DisconnectedGraphError(EdgeFieldError):
    pass
