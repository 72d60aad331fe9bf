"""Exception and warning taxonomy shared across the package.

Every domain failure raises a subclass of :class:`OtshiftError` so callers
(including the CLI) can distinguish bad input from genuine bugs.  Conditions
that have a well-defined recovery are reported as warnings instead of
exceptions; see the individual docstrings.
"""


class OtshiftError(Exception):
    """Base class for all domain errors raised by this package."""


class ValidationError(OtshiftError, ValueError):
    """Invalid input data (shape, range, or simplex violations)."""


class NonFiniteEntry(ValidationError):
    """An input matrix or vector contains NaN or infinity."""


class NegativeEntry(ValidationError):
    """An input that must be nonnegative contains a negative value."""


class RowSumViolation(ValidationError):
    """A score row deviates from sum 1 by more than the repair tolerance."""


class DimensionMismatch(ValidationError):
    """Shapes of related inputs do not agree."""


class UnbalancedProblem(ValidationError):
    """Total supply and total demand of a transport problem differ."""


class NumericalUnderflow(OtshiftError, ArithmeticError):
    """Scaling factors underflowed in the standard-domain entropic solver.

    Use the log-domain mode or a larger regularization strength.
    """


class EmptyPartition(OtshiftError):
    """A superclass with positive target mass received no points in stage 1."""


class MissingClass(ValidationError):
    """A class index never occurs in a label vector that must cover all classes."""


class SingularConfusion(OtshiftError):
    """Confusion matrix is too ill-conditioned to invert reliably."""


class OffSimplex(ValidationError):
    """A perturbed distribution left the probability simplex."""


class AlphaTooLarge(ValidationError):
    """Interpolation step exceeds the distance to the adversarial corner."""


class ParseError(OtshiftError, ValueError):
    """A data file could not be parsed.

    Carries the 1-based ``row`` and ``col`` of the first offending token
    when that location is known (0 means "not applicable").
    """

    def __init__(self, message: str, row: int = 0, col: int = 0):
        super().__init__(message)
        self.row = row
        self.col = col


# Recoverable conditions, reported via warnings.warn(..., category) while the
# operation still returns a usable result.

class DegenerateLabels(UserWarning):
    """A class is absent from the pseudo-labels; its weight is unconstrained."""


class Separable(UserWarning):
    """Logistic fit on linearly separable data; parameters were capped."""


class ZeroMass(UserWarning):
    """A zero-mass class makes the decision threshold infinite."""
