import pytest

from landscapy.exceptions import (
    ContactError,
    IllConditionedContactError,
    InfeasiblePoseError,
    InvalidParameterError,
    LandscapyError,
    LandscapyValidationError,
    MetricsError,
    MissingArtifactError,
    NoContactError,
    ReconstructionError,
    SignalError,
    TrialAbortedError,
)


class TestExceptions:
    """Test the exception classes."""

    def test_exception_hierarchy(self):
        """Test the exception hierarchy."""
        # Everything the library raises derives from LandscapyError
        for cls in (LandscapyValidationError, InvalidParameterError, ContactError, SignalError,
                    ReconstructionError, MetricsError, MissingArtifactError):
            assert issubclass(cls, LandscapyError)
        for cls in (NoContactError, InfeasiblePoseError, IllConditionedContactError,
                    TrialAbortedError):
            assert issubclass(cls, ContactError)

    def test_base_error(self):
        """Test the LandscapyError class."""
        message = "General error"
        error = LandscapyError(message)

        assert str(error) == message
        assert isinstance(error, Exception)

    def test_trial_aborted_error(self):
        """Test that an aborted trial carries where it stopped."""
        error = TrialAbortedError("Infeasible pose", time=3.2, x=-136.0)

        assert str(error) == "Infeasible pose"
        assert (error.time, error.x) == (3.2, -136.0)
        assert TrialAbortedError("no position").x is None

    def test_reconstruction_error(self):
        """Test that the condition estimate is kept."""
        error = ReconstructionError("Not positive definite", condition=1e18)

        assert str(error) == "Not positive definite"
        assert error.condition == 1e18

    def test_missing_artifact_error(self):
        """Test the message and path of a missing artifact."""
        error = MissingArtifactError('out/errors.csv')

        assert str(error) == "Missing artifact: out/errors.csv"
        assert error.path == 'out/errors.csv'

    def test_catching_specific_exceptions(self):
        """Test catching specific exception types."""
        try:
            raise InfeasiblePoseError("Beam L cannot clear the shell")
        except ContactError as e:
            assert isinstance(e, InfeasiblePoseError)
            assert str(e) == "Beam L cannot clear the shell"

        # Ensure specific exceptions don't catch each other
        with pytest.raises(NoContactError):
            try:
                raise NoContactError("Off the shell")
            except InfeasiblePoseError:
                pytest.fail("Should not catch NoContactError as InfeasiblePoseError")
