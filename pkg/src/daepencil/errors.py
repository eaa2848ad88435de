"""Exception types shared across the package."""


class DaePencilError(Exception):
    """Base class for all package errors."""


class NotRegular(DaePencilError):
    """Operation requires a regular (square, full-rank) pencil."""


class DegreeOverflow(DaePencilError):
    """Kernel degree sweep exceeded its bound; numerical ranks are inconsistent."""


class IndexTooHigh(DaePencilError):
    """The regular block of the pencil has index greater than one."""


class DecompositionInconsistent(DaePencilError):
    """Post-hoc identity residuals of a computed decomposition exceed tolerance."""


class SingularBlock(DaePencilError):
    """A restricted block that must be invertible failed its invertibility check."""


class ShapeMismatch(DaePencilError):
    """Matrix/vector shapes are incompatible."""


class ExprError(DaePencilError):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name, offset=None):
        msg = f"unknown identifier '{name}'"
        if offset is not None:
            msg += f" (at offset {offset})"
        super().__init__(msg)
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    pass


class EvalDomainError(ExprError):
    """Evaluation hit a domain violation (log of nonpositive, division by zero, ...)."""


class PhiSingular(DaePencilError):
    """The constraint Jacobian on the algebraic component is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NoConvergence(DaePencilError):
    """Newton iteration left its contraction neighborhood (no convergence)."""


class InconsistentStart(DaePencilError):
    """Initial point violates the consistency condition or the free-component choice."""


class FitFailed(DaePencilError):
    """Escape-time fit found no branch with acceptable correlation."""


class NonpositiveU(DaePencilError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ProblemFormatError(DaePencilError):
    """Problem file is malformed (JSON, shapes, or expressions)."""
