"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes (see ``ecsim.cli``):
parse errors -> 2, domain errors -> 3, numerical failures -> 4.
"""


class EcsimError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParseError(EcsimError):
    """Malformed input file, schema violation, or bad CLI argument value."""

    exit_code = 2


class DomainError(EcsimError):
    """Inputs are well-formed but outside the supported domain.

    Examples: a state on the wrong side of a separatrix, non-positive
    temperature, a convexity check that fails, an overdraft in the ledger.
    """

    exit_code = 3


class NumericalError(EcsimError):
    """A computation failed to converge or became unstable."""

    exit_code = 4


class UnsupportedModelError(DomainError):
    """Operation requested on a model kind that cannot support it."""


class BracketingError(NumericalError):
    """A root finder was given an interval that does not bracket a root."""


class IntegrationBlowupError(NumericalError):
    """Trajectory integration produced non-finite values."""

    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"integration blew up at step {step} (t={t:.6g})")


class OverdraftError(DomainError):
    """A ledger event would drive a non-negative account below zero."""


class UnknownEntityError(DomainError):
    """A ledger event references an entity that does not exist."""
