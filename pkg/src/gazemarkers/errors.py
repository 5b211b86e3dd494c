"""Exception types shared across the toolkit."""


class GazeToolkitError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(GazeToolkitError):
    """Invalid viewing geometry (non-positive fields, anisotropic pixel pitch)."""


class GazeDataError(GazeToolkitError):
    """Malformed gaze recording. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)
        self.line = line


class ManifestError(GazeToolkitError):
    """Cohort manifest fails schema or referential checks."""


class MapFormatError(GazeToolkitError):
    """Saliency map file unreadable or inconsistent with the stimulus."""


class DegenerateDataError(GazeToolkitError):
    """Statistic undefined for the given samples (zero variance, empty group)."""
