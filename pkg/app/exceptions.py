"""
Exceptions Module

This module defines the error types raised by the services. Every error carries a
machine-readable type tag and the process exit code the CLI maps it to, so the
error handler can format a consistent single-line response.
"""

from typing import Any, Dict, Optional

# Codigos de salida del CLI
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


class AdvObjectError(Exception):
    """
    Base class for all known errors of the toolkit.

    Attributes:
        message (str): Human readable description
        error_type (str): Snake case tag used in the machine-parsable error line
        exit_code (int): Process exit code for the CLI
        is_handled (bool): Marks the error as expected, the handler skips the traceback
    """
    error_type = "runtime_error"
    exit_code = EXIT_RUNTIME
    is_handled = True

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def __str__(self) -> str:
        return self.message


# mesh-io
class MalformedLine(AdvObjectError):
    error_type = "malformed_line"

    def __init__(self, line_number: int, content: str, reason: str = "unsupported directive"):
        super().__init__(
            f"Malformed OBJ line {line_number} ({reason}): {content!r}",
            line_number=line_number,
            content=content,
        )
        self.line_number = line_number
        self.content = content


class IndexOutOfRange(AdvObjectError):
    error_type = "index_out_of_range"


class MissingUV(AdvObjectError):
    error_type = "missing_uv"


class IsolatedVertex(AdvObjectError):
    error_type = "isolated_vertex"


class InvalidMesh(AdvObjectError):
    error_type = "invalid_mesh"


class UnsupportedKind(AdvObjectError):
    error_type = "unsupported_kind"


# scene
class GimbalLock(AdvObjectError):
    error_type = "gimbal_lock"


class ConfigError(AdvObjectError):
    error_type = "config_error"
    exit_code = EXIT_CONFIG


# renderers / attack
class ShapeMismatch(AdvObjectError):
    error_type = "shape_mismatch"


class ConstraintViolation(AdvObjectError):
    error_type = "constraint_violation"


# classifier
class ResolutionMismatch(AdvObjectError):
    error_type = "resolution_mismatch"


class DivergedLoss(AdvObjectError):
    error_type = "diverged_loss"


class ChecksumMismatch(AdvObjectError):
    error_type = "checksum_mismatch"


class SpecMismatch(AdvObjectError):
    error_type = "spec_mismatch"


class MissingClass(AdvObjectError):
    error_type = "missing_class"


# saliency
class RigMismatch(AdvObjectError):
    error_type = "rig_mismatch"


class InvalidThreshold(AdvObjectError):
    error_type = "invalid_threshold"


# metrics
class NotApplicable(AdvObjectError):
    error_type = "not_applicable"


# cli
class OutputExists(AdvObjectError):
    error_type = "output_exists"


class DigestMismatch(AdvObjectError):
    error_type = "digest_mismatch"


def error_attributes(exc: BaseException) -> Optional[Dict[str, Any]]:
    """
    Collect the loggable attributes of an error.

    Args:
        exc: The exception

    Returns:
        Dict with the error details, or None when there are none
    """
    details = getattr(exc, "details", None)
    return dict(details) if details else None
