"""Error taxonomy for the whole package.

Every failure a caller can act on gets its own class so the CLI can map
outcomes to exit codes and the simulation harness can count failures
without string matching.
"""


class DefInferError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DefInferError):
    """Array shapes are inconsistent with each other."""


class NonFinite(DefInferError):
    """An input or intermediate contains NaN or infinity."""


class NegativeVariance(DefInferError):
    """A variance parameter is negative."""


class SingularDesign(DefInferError):
    """The Gram matrix is singular or too ill-conditioned to invert."""


# Same failure surfaced when p > n makes the Gram matrix rank deficient.
RankDeficient = SingularDesign


class NotPositiveDefinite(DefInferError):
    """A matrix required to be positive definite is not."""


class DomainError(DefInferError):
    """A scalar argument lies outside the function's domain."""


class DidNotConverge(DefInferError):
    """Iterative solver hit its sweep budget before meeting tolerance.

    Carries the last iterate in ``result`` so a caller may accept it
    with a warning instead of discarding the work.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NumericalBreakdown(DefInferError):
    """A solver produced a state it cannot recover from."""


class InfeasibleProgram(DefInferError):
    """The linear program has no feasible point.

    ``families`` names the constraint families still violated at the
    minimal-relaxation point, as a diagnostic for tuning.
    """

    def __init__(self, message, families=()):
        super().__init__(message)
        self.families = tuple(families)


class DegenerateVariance(DefInferError):
    """The variance estimate collapsed; the studentized statistic is undefined."""


class TooFewReplicates(DefInferError):
    """Replicate-based variance estimation needs at least two columns."""


class EmptyRegion(DefInferError):
    """No grid point was accepted; the confidence region is empty on this grid."""


class UnknownDesign(DefInferError):
    """Requested simulation design name is not registered."""


class ParseError(DefInferError):
    """A data file could not be parsed; carries location detail in the message."""


class ConfigError(DefInferError):
    """A run-configuration file contains an unknown or malformed key."""
