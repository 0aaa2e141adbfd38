"""Exception hierarchy shared by every module of the package."""


class HZError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(HZError, ValueError):
    """Operands have incompatible shapes."""


class FormMismatch(HZError, ValueError):
    """A binary set operation received sets with different factor forms."""


class InvalidShape(HZError, ValueError):
    """An input vector or matrix has the wrong shape."""


class InvalidInterval(HZError, ValueError):
    """A random-interval request has a lower bound above its upper bound."""


class InvalidParameter(HZError, ValueError):
    """A solver parameter or problem option is outside its legal range."""


class StructurallySingular(HZError, ArithmeticError):
    """A factorization met a pivot that is zero to working precision."""


class InconsistentSystem(HZError, ValueError):
    """A linear equality system has no solution."""


class NotBounded(HZError, ValueError):
    """A set operation would produce an unbounded set."""


class InfeasibleProblem(HZError, ValueError):
    """A planning problem was detected to have an empty feasible set."""


class DomainError(HZError, ValueError):
    """A set fails a structural precondition (e.g. it is not a zonotope)."""


class MalformedInput(HZError, ValueError):
    """An input file does not follow the expected schema."""
