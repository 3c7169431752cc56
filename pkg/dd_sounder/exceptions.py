"""
Custom exceptions for dd-sounder.

This module defines a hierarchy of exceptions for the sounding pipeline. Every
exception carries an optional component name and a details dict, which the CLI
serializes into its machine-readable error record.
"""

from typing import Any, Dict, Optional


class SounderError(Exception):
    """
    Base exception for all dd-sounder errors.

    This is the parent class for every error raised by the package.
    """

    def __init__(
        self,
        message: str,
        component: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize sounder error.

        Args:
            message: Human-readable error message
            component: Pipeline component name (e.g., 'waveform', 'receiver')
            details: Additional error context
        """
        self.component = component
        self.details = details or {}
        self.raw_message = message

        full_message = message
        if component:
            full_message = f"[{component}] {message}"

        super().__init__(full_message)

    def to_record(self) -> Dict[str, Any]:
        """
        Convert to a JSON-serializable error record.

        Returns:
            Dict with error type, message, component and details
        """
        return {
            'error': type(self).__name__,
            'message': self.raw_message,
            'component': self.component,
            'details': {k: jsonable(v) for k, v in self.details.items()},
        }


class ConfigurationError(SounderError):
    """
    Invalid or missing configuration.

    Raised when:
    - Frame geometry violates the grid invariants
    - Estimator settings are out of range
    - An experiment spec cannot be parsed or validated
    - A required environment variable is not set
    """
    pass


class SignalError(SounderError):
    """
    Invalid sample buffer or grid.

    Raised when:
    - Buffer is empty, all-zero or non-finite
    - Buffer is shorter than one frame
    - Correlation window does not fit the buffer
    """
    pass


class ChannelError(SounderError):
    """
    Invalid channel description.

    Raised when:
    - A path has negative delay or non-finite gain
    - Per-tap parameter lists have mismatched lengths
    - The OFDM cyclic prefix is shorter than the channel delay spread
    """
    pass


class FileFormatError(SounderError):
    """
    IQ or CSF file does not match its binary format.

    Raised when:
    - Magic bytes are wrong
    - Payload is truncated
    - Header sample count disagrees with the payload
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        expected_bytes: Optional[int] = None,
        actual_bytes: Optional[int] = None,
    ):
        """
        Initialize file format error.

        Args:
            message: Error message
            path: File that failed to parse
            expected_bytes: Byte count implied by the header
            actual_bytes: Byte count found on disk
        """
        self.path = path
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes

        details = {
            'path': path,
            'expected_bytes': expected_bytes,
            'actual_bytes': actual_bytes,
        }

        super().__init__(message, component='io', details=details)


class EstimationError(SounderError):
    """
    Estimation or statistic cannot be computed.

    Raised when:
    - NMSE receives no estimates or no truth paths
    - A statistic needs more paths than provided
    - A power profile has zero total power
    """
    pass


class AcceptanceError(SounderError):
    """
    A built-in acceptance check failed (``--check`` mode).
    """

    def __init__(self, message: str, check: str, observed: Any = None, expected: Any = None):
        """
        Initialize acceptance error.

        Args:
            message: Error message
            check: Name of the failed check
            observed: Observed value
            expected: Expected value or tolerance description
        """
        self.check = check
        self.observed = observed
        self.expected = expected

        details = {'check': check, 'observed': observed, 'expected': expected}

        super().__init__(message, component='check', details=details)


def jsonable(value: Any) -> Any:
    """Coerce numpy scalars, containers and non-finite floats into JSON-friendly values."""
    if getattr(value, 'ndim', 0) > 0:
        return jsonable(value.tolist())
    if hasattr(value, 'item') and callable(value.item):
        try:
            return jsonable(value.item())
        except (TypeError, ValueError):
            pass
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and value != value:
        return None
    if isinstance(value, float) and value in (float('inf'), float('-inf')):
        return str(value)
    return value
