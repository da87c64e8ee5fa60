"""Exception and warning types shared across the package."""


class NlimError(Exception):
    """Base class for all errors raised by this package."""


class FitWarning(UserWarning):
    """Non-fatal diagnostic emitted during estimation (conditioning, clipping, ...)."""


class NotSymmetricError(NlimError):
    pass


class IndefiniteMatrixError(NlimError):
    """A matrix required to be positive semidefinite is indefinite beyond tolerance."""

    def __init__(self, label, eigenvalues):
        self.label = label
        self.eigenvalues = eigenvalues
        super().__init__(f"{label} is indefinite beyond tolerance; eigenvalues {eigenvalues}")


class SingularMatrixError(NlimError):
    """A linear solve hit a (numerically) singular operator."""

    def __init__(self, label, cond=None):
        self.label = label
        self.cond = cond
        msg = f"singular operator: {label}"
        if cond is not None:
            msg += f" (condition number {cond:.3e})"
        super().__init__(msg)


class SylvesterError(NlimError):
    """Sylvester/Lyapunov equation has no unique solution."""


class MatrixExpOverflowError(NlimError):
    pass


class EmptyFreeSetError(NlimError):
    """A constraint specification leaves no free parameters."""


class RankDeficientMapError(NlimError):
    """The constraint-induced parameter map does not have full column rank."""


class TooShortError(NlimError):
    pass


class NonUniformSamplingError(NlimError):
    def __init__(self, index, msg=""):
        self.index = index
        super().__init__(msg or f"non-uniform sampling at index {index}")


class InsufficientLagsError(NlimError):
    pass


class UnstableDynamicsError(NlimError):
    pass


class NonFiniteStateError(NlimError):
    """A simulated trajectory left the representable range."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"state became non-finite at integration step {step}")


class AllFitsFailedError(NlimError):
    pass


class ZeroReferenceError(NlimError):
    pass


class EmptySampleError(NlimError):
    pass


class TrajectoryParseError(NlimError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


class ZeroMonthlyVarianceError(NlimError):
    def __init__(self, month, column):
        self.month = month
        self.column = column
        super().__init__(
            f"calendar month {month} has zero variance in column {column!r}; z-score undefined"
        )
