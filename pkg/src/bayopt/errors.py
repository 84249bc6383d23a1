"""Exception types shared across the library."""


class BayoptError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(BayoptError):
    """A Cholesky pivot was non-positive; the matrix is not SPD at working precision."""


class DimensionMismatch(BayoptError):
    """Operands have incompatible shapes."""


class ParseError(BayoptError):
    """A grammar string could not be parsed.

    Carries the byte offset of the first offending character.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ParamCountMismatch(BayoptError):
    """More criterion parameters were supplied than the criterion tree has slots,
    or a combinator that requires explicit parameters received none."""


class InsufficientData(BayoptError):
    """Not enough observations for the requested estimator (e.g. n <= m under Jeffreys)."""


class InvalidParams(BayoptError):
    """Run configuration violates a parameter invariant."""


class NoFeasiblePoint(BayoptError):
    """Every probed point failed the feasibility predicate."""
