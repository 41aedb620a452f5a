"""Exception hierarchy shared by the whole toolkit.

Every error carries an ``exit_code`` so the CLI can map failures onto a small,
stable set of process exit codes:

* 2 -- validation problems (bad shapes, malformed files, bad arguments)
* 3 -- infeasible instances
* 4 -- numeric trouble (singular KKT systems, degenerate active sets,
  cycling, exhausted resampling, non-finite losses)
"""

from __future__ import annotations


class MpqpError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(MpqpError):
    """Inputs violate a documented precondition (shapes, ranks, arguments)."""

    exit_code = 2


class ParseError(ValidationError):
    """A problem, case, model, or dataset file could not be parsed."""

    exit_code = 2


class FingerprintMismatch(ValidationError):
    """A model was applied to a problem it was not built for."""

    exit_code = 2


class Infeasible(MpqpError):
    """The QP instance has no feasible point at the given parameters."""

    exit_code = 3


class InfeasibleStart(Infeasible):
    """Region discovery could not start: theta0 itself is infeasible."""

    exit_code = 3


class NumericError(MpqpError):
    """Base class for numeric failures."""

    exit_code = 4


class SingularKkt(NumericError):
    """The (expanded) KKT matrix is numerically singular."""

    exit_code = 4


class DegenerateActiveSet(NumericError):
    """Stacked equality + binding rows are rank deficient (LICQ fails)."""

    exit_code = 4


class OracleLimit(NumericError):
    """An oracle resource bound was exceeded (subset count, iterations)."""

    exit_code = 4


class CycleDetected(NumericError):
    """The active-set iteration revisited a state and could not progress."""

    exit_code = 4


class RegionExhausted(NumericError):
    """Region sampling failed verification too many times in a row."""

    exit_code = 4


class NonFiniteLoss(NumericError):
    """Training produced a NaN or infinite loss."""

    exit_code = 4
