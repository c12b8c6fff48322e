"""Exception and warning types raised across the package."""


class CtesnError(Exception):
    """Base class for all package errors."""


class NumericalFailure(CtesnError):
    """A numerical routine could not produce a valid result."""


class StepLimitExceeded(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class NonFiniteState(NumericalFailure):
    pass


class DegenerateKnots(CtesnError, ValueError):
    pass


class EmptyOverlap(CtesnError, ValueError):
    pass


class DimensionUnsupported(CtesnError, ValueError):
    pass


class ShapeMismatch(CtesnError, ValueError):
    pass


class SingularSystem(NumericalFailure):
    """Raised by RBF fitting; ``pair`` holds the offending center indices when known."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ZeroSpectralRadius(NumericalFailure):
    pass


class TrainingDiverged(NumericalFailure):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class CenterSelectionFailed(NumericalFailure):
    pass


class BudgetTooSmall(CtesnError, ValueError):
    pass


class MissingOutputLabel(CtesnError, KeyError):
    pass


class DeadlockedWiring(CtesnError, ValueError):
    pass


class ConfigError(CtesnError, ValueError):
    pass


class ArtifactError(CtesnError):
    """Surrogate file is corrupt, has a bad checksum, or an unsupported version."""


class ExtrapolationWarning(UserWarning):
    """Evaluation happened outside the fitted/trained domain; result is still returned."""


class ZeroSignalWarning(UserWarning):
    """A reference series is identically zero; absolute error was used for it."""
