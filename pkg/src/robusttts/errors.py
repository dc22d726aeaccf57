"""Exception hierarchy shared across the package."""


class RobustTTSError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(RobustTTSError, ValueError):
    pass


class CannotScale(RobustTTSError):
    """Loudness normalisation requested on a signal that is gated out entirely."""


class UnachievableReverb(RobustTTSError):
    pass


class DegenerateGeometry(RobustTTSError):
    pass


class ConfigError(RobustTTSError):
    pass


class NumericalError(RobustTTSError):
    pass


class InvalidTarget(RobustTTSError, ValueError):
    pass


class TrainingDiverged(RobustTTSError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"loss became non-finite at step {step}")


class EmptyExpansion(RobustTTSError):
    pass


class FrameMismatch(RobustTTSError):
    pass


class EmptySet(RobustTTSError):
    pass


class ArtifactError(RobustTTSError):
    """Artifact missing, unreadable, or carrying an incompatible format/version."""

    def __init__(self, message: str, expected: str | None = None, found: str | None = None):
        self.expected = expected
        self.found = found
        super().__init__(message)
