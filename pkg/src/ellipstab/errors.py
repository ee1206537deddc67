"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class EllipstabError(Exception):
    """Base class for library errors."""


class DimensionError(EllipstabError, ValueError):
    """Mismatched number of variables, modes or shapes."""


class DomainError(EllipstabError, ValueError):
    """An argument lies outside the domain of the operation."""


class PeriodError(DomainError):
    """A vector claimed to be periodic is not."""


class NormalizationError(EllipstabError, ValueError):
    """The Hamiltonian is not in the expected normalized form."""


class ResonanceError(EllipstabError, ArithmeticError):
    """An integer vector k with k.alpha = 0 was met; ``witness`` holds it."""

    def __init__(self, witness, message=None):
        self.witness = tuple(int(v) for v in witness)
        super().__init__(message or f"resonance with witness k={self.witness}")


class HypothesisViolation(EllipstabError):
    """A mathematical hypothesis needed by an algorithm does not hold."""

    def __init__(self, reason, **details):
        self.reason = reason
        self.details = details
        super().__init__(reason)


class ThresholdError(HypothesisViolation):
    """A named smallness inequality failed."""

    def __init__(self, inequality, lhs, rhs):
        self.inequality = inequality
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        super().__init__(
            f"threshold '{inequality}' violated: {self.lhs:.6g} > {self.rhs:.6g}",
            inequality=inequality, lhs=self.lhs, rhs=self.rhs,
        )


class StepSizeError(EllipstabError, RuntimeError):
    """The implicit integrator failed to converge; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)


class ConsistencyError(EllipstabError, RuntimeError):
    """An identity that holds by construction failed (indicates a bug)."""
