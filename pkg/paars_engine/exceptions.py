"""
PAARS Exception Handling Module
Centralized exception classes and error handling utilities
"""

import functools
import logging
from typing import Optional, Dict, Any
from datetime import datetime, timezone

logger = logging.getLogger(__name__)


class PaarsError(Exception):
    """Base exception for all PAARS errors"""

    default_code = "PAARS_ERROR"
    http_status = 500

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.default_code
        self.details = details or {}
        self.timestamp = datetime.now(timezone.utc)

        logger.error(f"PAARS Error [{self.error_code}]: {message}", extra={
            'error_code': self.error_code,
            'details': self.details,
            'timestamp': self.timestamp.isoformat()
        })


# --- environment ---------------------------------------------------------

class GridError(PaarsError):
    """Raised for invalid grid geometry or positions"""
    default_code = "GRID_ERROR"
    http_status = 400


class CellTooLargeError(GridError):
    """Cell side exceeds the 2 m contact radius"""

    def __init__(self, cell_size_m: float, limit_m: float):
        super().__init__(
            f"Cell size {cell_size_m} m exceeds the {limit_m} m contact radius",
            "CELL_TOO_LARGE",
            {'cell_size_m': cell_size_m, 'limit_m': limit_m},
        )


class InvalidDimensionsError(GridError):
    def __init__(self, message: str, dimensions: Optional[Dict[str, Any]] = None):
        super().__init__(message, "INVALID_DIMENSIONS", dimensions)


class OutOfBoundsError(GridError):
    """Position lies outside the grid"""

    def __init__(self, position, bounds):
        super().__init__(
            f"Position {tuple(position)} is outside the grid",
            "OUT_OF_BOUNDS",
            {'position': list(position), 'bounds': list(bounds)},
        )


class BeforeReferenceError(PaarsError):
    """Timestamp precedes the epoch clock reference"""
    http_status = 400

    def __init__(self, timestamp: float, t0: float):
        super().__init__(
            f"Timestamp {timestamp} precedes clock reference {t0}",
            "BEFORE_REFERENCE",
            {'timestamp': timestamp, 't0': t0},
        )


# --- client --------------------------------------------------------------

class DuplicateEpochError(PaarsError):
    http_status = 409

    def __init__(self, epoch: int):
        super().__init__(f"Ledger already holds a record for epoch {epoch}", "DUPLICATE_EPOCH", {'epoch': epoch})


class EmptyLedgerError(PaarsError):
    http_status = 400

    def __init__(self, message: str = "Ledger holds no records to share"):
        super().__init__(message, "EMPTY_LEDGER")


# --- contact store -------------------------------------------------------

class DuplicateRowError(PaarsError):
    http_status = 409

    def __init__(self, epoch: int):
        # token and rand stay out of the log line
        super().__init__("Row already stored for this (token, rand, epoch)", "DUPLICATE_ROW", {'epoch': epoch})


class VerificationFailedError(PaarsError):
    """Diagnosis claim could not be verified with the health authority registry"""
    http_status = 403

    def __init__(self, message: str = "Verification code rejected"):
        super().__init__(message, "VERIFICATION_FAILED")


class NoMatchingRowsError(PaarsError):
    http_status = 404

    def __init__(self, entries: int):
        super().__init__("No stored row matches the reported entries", "NO_MATCHING_ROWS", {'entries': entries})


class UnknownRowError(PaarsError):
    http_status = 404

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "UNKNOWN_ROW", details)


class UnknownPairError(PaarsError):
    http_status = 404

    def __init__(self, count: int = 1):
        super().__init__("No stored row for the requested (token, rand) pair", "UNKNOWN_PAIR", {'pairs': count})


class StoreError(PaarsError):
    """Raised when the persistence file cannot be read or written"""

    def __init__(self, message: str, operation: Optional[str] = None):
        super().__init__(message, "STORE_ERROR", {'operation': operation})


# --- epi -----------------------------------------------------------------

class NonPositiveInputError(PaarsError):
    http_status = 400

    def __init__(self, **values):
        super().__init__(f"Inputs must be strictly positive: {values}", "NON_POSITIVE_INPUT", values)


class NegativeDaysError(PaarsError):
    http_status = 400

    def __init__(self, days: float):
        super().__init__(f"Days since onset must be non-negative, got {days}", "NEGATIVE_DAYS", {'days': days})


class EmptyEventsError(PaarsError):
    http_status = 400

    def __init__(self):
        super().__init__("At least one contact event is required", "EMPTY_EVENTS")


class EmptyInputError(PaarsError):
    http_status = 400

    def __init__(self, what: str = "input"):
        super().__init__(f"Empty {what}", "EMPTY_INPUT", {'what': what})


# --- psi -----------------------------------------------------------------

class EmptySetError(PaarsError):
    http_status = 400

    def __init__(self):
        super().__init__("PSI query set must not be empty", "EMPTY_SET")


class PsiStateError(PaarsError):
    http_status = 409

    def __init__(self, expected: str, actual: str):
        super().__init__(
            f"PSI session in state {actual}, expected {expected}",
            "PSI_STATE_ERROR",
            {'expected': expected, 'actual': actual},
        )


# --- shared --------------------------------------------------------------

class DataValidationError(PaarsError):
    """Raised when input data validation fails"""
    http_status = 400

    def __init__(self, message: str, data_info: Optional[Dict[str, Any]] = None):
        super().__init__(message, "DATA_VALIDATION_ERROR", {'data_info': data_info})


class ConfigError(PaarsError):
    """Raised when configuration is missing or malformed"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message, "CONFIG_ERROR", {'key': key})


class TransportError(PaarsError):
    """A service call answered with an error body"""

    def __init__(self, endpoint: str, status_code: int, error_code: Optional[str] = None, message: str = ""):
        super().__init__(
            f"{endpoint} returned {status_code}: {message or error_code}",
            error_code or "TRANSPORT_ERROR",
            {'endpoint': endpoint, 'status_code': status_code},
        )
        self.status_code = status_code


def handle_exception(func):
    """Decorator for handling exceptions in PAARS functions"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PaarsError:
            # Already logged on construction
            raise
        except Exception as e:
            logger.exception(f"Unexpected error in {func.__name__}: {str(e)}")
            raise PaarsError(
                f"Unexpected error in {func.__name__}: {str(e)}",
                "UNEXPECTED_ERROR",
                {'function': func.__name__}
            ) from e
    return wrapper


def log_operation(operation_name: str, details: Optional[Dict[str, Any]] = None):
    """Log operation details for monitoring"""
    logger.info(f"Operation: {operation_name}", extra={
        'operation': operation_name,
        'details': details or {},
        'timestamp': datetime.now(timezone.utc).isoformat()
    })
