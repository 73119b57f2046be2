"""
Custom exception types for oligodyn.

Provides granular error handling for the failure modes of an equilibrium run:
- Parameter errors (invalid model inputs, unreadable configs)
- Bracketing errors (no sign change inside the allowed bracket)
- Convergence errors (non-finite residuals, multiple roots, iteration caps)
- Output errors (artifacts that cannot be written)

Every class carries the CLI exit code it maps to.
"""

from typing import Any, Dict, List, Optional


class OligodynError(Exception):
    """Base exception for all oligodyn errors."""

    exit_code: int = 1

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None,
        recoverable: bool = False
    ):
        """
        Initialize oligodyn error.

        Args:
            message: Human-readable error message
            details: Additional context (e.g., state, grid point, bracket)
            recoverable: Whether a retry with different settings can succeed
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}
        self.recoverable = recoverable

    def __str__(self) -> str:
        """Format error message with details."""
        base = f"{self.__class__.__name__}: {self.message}"
        if self.details:
            details_str = "\n".join(f"  {k}: {v}" for k, v in self.details.items())
            return f"{base}\nDetails:\n{details_str}"
        return base

    def one_line(self) -> str:
        """Single-line rendering used for the CLI `error:` line."""
        parts = [f"{self.__class__.__name__}: {self.message}"]
        parts.extend(f"{k}={v}" for k, v in self.details.items())
        return "; ".join(parts).replace("\n", " ")

    def to_dict(self) -> Dict[str, Any]:
        """Serialize error to dictionary for JSON reports."""
        return {
            "type": self.__class__.__name__,
            "message": self.message,
            "details": self.details,
            "recoverable": self.recoverable,
            "exit_code": self.exit_code
        }


class ParameterError(OligodynError):
    """
    Invalid model parameters or run configuration.

    Examples:
    - Discount factor outside [0, 1)
    - Cost vector of the wrong length or increasing
    - Unknown key in a `--config` file
    """

    exit_code = 2

    def __init__(
        self,
        message: str,
        field_errors: Optional[List[Dict[str, Any]]] = None,
        **kwargs
    ):
        """
        Initialize parameter error.

        Args:
            message: Error description
            field_errors: List of per-field validation errors
        """
        details = kwargs.get('details', {})
        if field_errors:
            details['field_errors'] = field_errors

        super().__init__(message=message, details=details, recoverable=True)
        self.field_errors = field_errors or []

    @classmethod
    def from_pydantic_error(cls, pydantic_error) -> 'ParameterError':
        """
        Create ParameterError from a pydantic ValidationError.

        Args:
            pydantic_error: Pydantic validation error

        Returns:
            ParameterError with formatted field errors
        """
        field_errors = []
        for error in pydantic_error.errors():
            field_errors.append({
                'field': '.'.join(str(loc) for loc in error['loc']),
                'message': error['msg'],
                'type': error['type']
            })

        error_count = len(field_errors)
        first = field_errors[0] if field_errors else {'field': 'unknown', 'message': ''}
        message = (
            f"Invalid parameters: {error_count} error(s) starting with "
            f"'{first['field']}' ({first['message']})"
        )
        return cls(message=message, field_errors=field_errors)


class NoSignChange(OligodynError):
    """The residual keeps one sign over the widest allowed bracket."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        bracket: Optional[tuple] = None,
        residuals: Optional[tuple] = None,
        **kwargs
    ):
        details = kwargs.get('details', {})
        if bracket is not None:
            details['bracket'] = list(bracket)
        if residuals is not None:
            details['residuals'] = list(residuals)
        super().__init__(message=message, details=details, recoverable=True)
        self.bracket = bracket
        self.residuals = residuals


class ConvergenceFailure(OligodynError):
    """
    A solver did not reach its tolerance.

    Examples:
    - Bisection interval collapsed above the residual tolerance
    - Value iteration hit its iteration cap
    - A per-state scan found more than one root
    """

    exit_code = 3

    def __init__(
        self,
        message: str,
        state: Optional[tuple] = None,
        **kwargs
    ):
        details = kwargs.get('details', {})
        if state is not None:
            details['state'] = list(state)
        super().__init__(message=message, details=details, recoverable=False)
        self.state = state


class NonFinite(ConvergenceFailure):
    """The residual returned NaN or an infinity."""

    def __init__(self, message: str, x: Optional[float] = None, **kwargs):
        details = kwargs.pop('details', {})
        if x is not None:
            details['x'] = x
        super().__init__(message=message, details=details, **kwargs)
        self.x = x


class MultipleRoots(ConvergenceFailure):
    """A monotonicity scan detected more than one sign change."""

    def __init__(self, message: str, crossings: int = 0, **kwargs):
        details = kwargs.pop('details', {})
        details['crossings'] = crossings
        super().__init__(message=message, details=details, **kwargs)
        self.crossings = crossings


class MaxIterExceeded(ConvergenceFailure):
    """An iterative solver hit its iteration cap."""

    def __init__(
        self,
        message: str,
        iterations: int = 0,
        last_change: Optional[float] = None,
        **kwargs
    ):
        details = kwargs.pop('details', {})
        details['iterations'] = iterations
        if last_change is not None:
            details['last_change'] = last_change
        super().__init__(message=message, details=details, **kwargs)
        self.iterations = iterations
        self.last_change = last_change


class OutputError(OligodynError):
    """An artifact could not be written."""

    exit_code = 5

    def __init__(self, message: str, path: Optional[str] = None, **kwargs):
        details = kwargs.get('details', {})
        if path is not None:
            details['path'] = path
        super().__init__(message=message, details=details, recoverable=False)
        self.path = path
