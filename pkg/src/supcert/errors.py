"""Exception hierarchy.

Every failure raised by the library derives from :class:`SupcertError`, so
callers can catch one type.  The CLI maps the categories onto exit codes.
"""


class SupcertError(ValueError):
    """Base class for all library errors."""


class BadShape(SupcertError):
    pass


class BadDimension(SupcertError):
    pass


class NotPositiveDefinite(SupcertError):
    """The proposed basis is linearly dependent (or numerically so)."""


class BasisMismatch(SupcertError):
    pass


class NotNormalized(SupcertError):
    pass


class ZeroVector(SupcertError):
    pass


class OutOfRange(SupcertError):
    pass


class Unsupported(SupcertError):
    pass


class NotOrdered(SupcertError):
    pass


class BadPermutation(SupcertError):
    pass


class NotStochastic(SupcertError):
    pass


class RankMismatch(SupcertError):
    pass


class Indeterminate(SupcertError):
    pass


class UnsupportedCase(SupcertError):
    """No index-function table entry covers this sign pattern."""


class NotFlipSymmetric(UnsupportedCase):
    """Reordering would need a relabeling that does not preserve the Gram matrix."""


class Infeasible(SupcertError):
    """The probability system has a solution with a negative component."""

    def __init__(self, message, probs=None):
        super().__init__(message)
        self.probs = probs


class Degenerate(SupcertError):
    pass


class DivisionByZero(SupcertError):
    pass


class RankIncrease(SupcertError):
    pass


class UnsupportedDimension(SupcertError):
    pass


class Incomplete(SupcertError):
    pass


class GridTooLarge(SupcertError):
    pass


class ConversionRefused(SupcertError):
    """Raised by the planner; ``report`` explains which condition failed."""

    def __init__(self, report):
        super().__init__(f"conversion refused: region {report.region}")
        self.report = report
