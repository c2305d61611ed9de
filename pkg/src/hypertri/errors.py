"""Exception and warning types shared across the package."""


class HypertriError(Exception):
    """Base class for all package-specific errors."""


class EvaluationError(HypertriError):
    """A symbol produced a non-finite value on the evaluation domain."""

    def __init__(self, message, t=None, x=None, xi=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.xi = xi


class DimensionError(HypertriError):
    """Matrix or vector dimensions are incompatible."""


class BadEigenpair(HypertriError):
    """An alleged eigenpair fails the residual check on the grid."""


class ConditionFailure(HypertriError):
    """No eigenvector component stays bounded away from zero on the grid.

    Carries the witness point where the best component attains its minimum.
    """

    def __init__(self, message, t=None, x=None, xi=None, min_moduli=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.xi = xi
        self.min_moduli = min_moduli


class ContinuationError(HypertriError):
    """Eigenvalue matching between neighbouring nodes became ambiguous."""


class InstabilityError(HypertriError):
    """Time stepping produced non-finite values or violates the step-size guard."""

    def __init__(self, message, t=None, cfl=None):
        super().__init__(message)
        self.t = t
        self.cfl = cfl


class HypothesisFailure(HypertriError):
    """The system violates the order conditions and no override was given."""


class NotContractive(HypertriError):
    """The iteration operator is not a contraction on the current time slab."""

    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho


class SolveFailure(HypertriError):
    """The solver gave up (slab length underflowed or stepping blew up)."""


class NotXIndependent(HypertriError):
    """A symbol required to be constant in x varies across the spatial grid."""


class DegenerateData(HypertriError):
    """Input data is degenerate for the requested fit or measurement."""


class ParseError(HypertriError):
    """An expression failed to parse.  Carries the offending position."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class ScenarioError(HypertriError):
    """A scenario file is malformed or violates the schema."""


class MultiplicityWarning(UserWarning):
    """Eigenvalues came closer than the separation threshold at some node."""


class AliasingWarning(UserWarning):
    """The top quarter of the spectrum carries non-negligible Sobolev mass."""
