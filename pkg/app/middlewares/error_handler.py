"""
Error Handler Middleware

Wraps every CLI command: known errors become a single-line JSON object on
stderr and the mapped exit code; anything unexpected is logged with its
traceback and exits as a runtime failure.
"""

import functools
import json
import sys
import traceback
from typing import Any, Callable, Dict, List, Optional

import click
from pydantic import ValidationError

from app.exceptions import EXIT_CONFIG, EXIT_RUNTIME, AdvObjectError, error_attributes
from app.utils.logging_config import get_logger

logger = get_logger("error_handler")


def format_error_response(
    message: str,
    error_type: str,
    exit_code: int,
    errors: Optional[List[Dict[str, Any]]] = None,
) -> Dict[str, Any]:
    """
    Format the error response.

    Args:
        message: Error message
        error_type: Type of error
        exit_code: Process exit code
        errors: Optional list of detailed errors

    Returns:
        Dict: Formatted error response
    """
    response = {
        "error": {
            "message": message,
            "type": error_type,
            "exit_code": exit_code,
        }
    }
    if errors:
        response["error"]["details"] = errors
    return response


def emit_error(response: Dict[str, Any]) -> None:
    """Write the error as one JSON line on stderr."""
    click.echo(json.dumps(response, sort_keys=True, default=str), err=True)


def _validation_details(exc: ValidationError) -> List[Dict[str, Any]]:
    return [
        {"loc": list(error.get("loc", [])), "msg": error.get("msg", ""), "type": error.get("type", "")}
        for error in exc.errors()
    ]


def handle_errors(command: Callable) -> Callable:
    """
    Decorator mapping exceptions raised by a command to exit codes.

    click's own usage errors pass through untouched (exit 2 with usage text).
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except AdvObjectError as e:
            log = logger.warning if e.exit_code == EXIT_CONFIG else logger.error
            log(f"{type(e).__name__}: {e.message}")
            attributes = error_attributes(e)
            if attributes:
                logger.debug(f"Error attributes: {attributes}")
            emit_error(format_error_response(e.message, e.error_type, e.exit_code))
            sys.exit(e.exit_code)
        except ValidationError as e:
            # Parametros de linea de comandos que no pasan la validacion de pydantic
            details = _validation_details(e)
            logger.warning(f"Invalid parameters: {details}")
            emit_error(format_error_response("Invalid parameters", "config_error", EXIT_CONFIG, details))
            sys.exit(EXIT_CONFIG)
        except Exception as e:
            logger.error(f"Unexpected error: {str(e)}")
            logger.error(f"Error type: {type(e).__name__}")
            logger.error(traceback.format_exc())
            emit_error(format_error_response(str(e) or type(e).__name__, "internal_error", EXIT_RUNTIME))
            sys.exit(EXIT_RUNTIME)

    return wrapper
