"""Exception hierarchy shared across the package."""


class ChainingError(Exception):
    """Base class for all package errors."""


class InvalidParams(ChainingError):
    """Parameters outside the documented domain of an operation."""


class InvalidNFunction(ChainingError):
    """A candidate evaluator failed the N-function audit; the message names the check."""


class GridTooCoarse(ChainingError):
    """Numeric convex conjugation produced a non-convex profile on the audit grid."""


class OutOfRange(ChainingError):
    """Requested inverse value lies beyond the evaluable range of the function."""


class Delta2Fails(ChainingError):
    """No valid doubling modulus in (0, 1) exists on the audited grid."""


class Delta2Missing(ChainingError):
    """Operation requires a recorded doubling certificate that was never computed."""


class EmptySubset(ChainingError):
    """A metric-space operation received an empty index subset."""


class ExactTooLarge(ChainingError):
    """Exact (exhaustive) mode requested above its instance-size cap."""


class NotAdmissible(ChainingError):
    """A net or partition sequence violates an admissibility invariant."""


class InvalidP(ChainingError):
    """Moment order below 1."""


class PackingTooLarge(ChainingError):
    """A maximal separated packing reached the level cardinality cap.

    This is a counterexample to the growth condition for the functional on the
    offending cell; the witness data is attached for audits that consume it.
    """

    def __init__(self, message, *, points=None, a=None, level=None, j=None):
        super().__init__(message)
        self.points = points
        self.a = a
        self.level = level
        self.j = j


class OracleUnavailable(ChainingError):
    """An audit needs an exact oracle that is not available at this size."""


class MGFOverflow(ChainingError):
    """Empirical moment generating function exceeded float range on the whole grid."""


class ResolutionTooLow(ChainingError):
    """Tail bound at a requested threshold is below Monte Carlo resolution."""


class AlphaUnsupported(ChainingError):
    """No precomputed tail-to-moment constant for this exponent."""


class EmptyCone(ChainingError):
    """Cone has empty intersection with the unit sphere."""


class NotConverged(ChainingError):
    """Iterative solver exhausted its budget (partial iterates carry a flag instead)."""


class NoPositiveEstimate(ChainingError):
    """Recovery error audit needs a strictly positive singular-value estimate."""


class ParseError(ChainingError):
    """Input file failed to parse; message carries location information."""


class ValidationError(ChainingError):
    """Parsed input violates a named domain invariant."""
