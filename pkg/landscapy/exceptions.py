class LandscapyError(Exception):
    """Base exception class for landscapy errors."""
    pass


class LandscapyValidationError(LandscapyError):
    """Exception raised when a run configuration fails schema validation."""
    pass


class InvalidParameterError(LandscapyError):
    """Exception raised for degenerate shell, beam, body or grid parameters."""
    pass


class ContactError(LandscapyError):
    """Base class for failures of the contact mechanics."""
    pass


class NoContactError(ContactError):
    """Exception raised when a point is off the shell or a trial never engages both beams."""
    pass


class InfeasiblePoseError(ContactError):
    """Exception raised when the shell penetrates a beam even at the deflection cap."""
    pass


class IllConditionedContactError(ContactError):
    """Exception raised when the contact moment arm about the hinge is too short."""
    pass


class TrialAbortedError(ContactError):
    """Exception raised when a simulated traverse hits an infeasible pose."""

    def __init__(self, message: str, time: float = None, x: float = None):
        super().__init__(message)
        self.time = time
        self.x = x


class SignalError(LandscapyError):
    """Exception raised when a series cannot be filtered or trials cannot be averaged."""
    pass


class ReconstructionError(LandscapyError):
    """Exception raised when the vector-field decomposition cannot be solved."""

    def __init__(self, message: str, condition: float = None):
        super().__init__(message)
        self.condition = condition


class MetricsError(LandscapyError):
    """Exception raised when an error metric is undefined for its inputs."""
    pass


class MissingArtifactError(LandscapyError):
    """Exception raised when a pipeline stage cannot find its input file."""

    def __init__(self, path):
        super().__init__(f"Missing artifact: {path}")
        self.path = path
