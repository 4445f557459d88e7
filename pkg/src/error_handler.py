"""
Centralized error handling and logging module.

Provides utilities for:
- Extensive debug logging (enabled with DEBUG_MODE=true)
- Error tracking with context and tracebacks
- The exception hierarchy shared by every cavicrys module
"""

import os
import sys
import logging
from logging.handlers import RotatingFileHandler
import traceback
import json
from typing import Optional, Dict, Any


# Configuration from environment variables
DEBUG_MODE = os.environ.get('DEBUG_MODE', 'false').lower() in ('true', '1', 'yes')
LOG_FORMAT = '%(asctime)s [%(name)s] %(levelname)s %(message)s'

# Track if handlers have been set up to avoid duplicates
_debug_handler_setup = False
_logging_configured = False


class CavicrysError(Exception):
    """Base class for every error raised by cavicrys."""


class ConfigurationError(CavicrysError):
    """Invalid parameters, unsupported method or mode, degenerate geometry."""


class ConfigParseError(ConfigurationError):
    """Malformed configuration text."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnknownKeyError(ConfigParseError):
    """A configuration key that no section accepts."""

    def __init__(self, key: str, line_number: int):
        super().__init__(f"unknown key '{key}'", line_number)
        self.key = key


class ValidationError(ConfigurationError):
    """A configuration value that parsed but is physically invalid."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class RequestValidationError(ConfigurationError):
    """A sweep request that cannot be run."""


class UsageError(ConfigurationError):
    """Bad command-line arguments."""


class UnsupportedOrderError(ConfigurationError):
    """Hermite order above the supported cap."""


class ComputationError(CavicrysError):
    """A numerical computation or fit that did not produce a usable result."""


class AccuracyError(ComputationError):
    """Requested accuracy not reached; carries the best estimate available."""

    def __init__(self, message: str, best_estimate: Any = None):
        super().__init__(message)
        self.best_estimate = best_estimate


class DomainError(ComputationError):
    """Argument outside the mathematical domain of an operation."""


class FitDegenerateError(ComputationError):
    """Data that does not constrain the fitted model (e.g. no visible peak)."""


class IllConditionedError(ComputationError):
    """Data that leaves fit parameters unidentifiable."""


class _StderrHandler(logging.StreamHandler):
    """Stream handler that writes to the current sys.stderr."""

    def __init__(self):
        super().__init__(sys.stderr)

    def emit(self, record):
        self.stream = sys.stderr
        super().emit(record)


def configure_logging(level: int = logging.INFO) -> logging.Logger:
    """
    Configure the root logger for command-line use.

    Log records go to stderr; stdout carries machine-readable output only.
    When CAVICRYS_LOG_DIR is set a rotating log file is added as well.

    Args:
        level: Level for the stream handler

    Returns:
        The root logger
    """
    global _logging_configured

    root = logging.getLogger()
    if _logging_configured:
        return root

    stream_handler = _StderrHandler()
    stream_handler.setLevel(level)
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(stream_handler)
    root.setLevel(logging.DEBUG if DEBUG_MODE else level)

    log_dir = os.environ.get('CAVICRYS_LOG_DIR')
    if log_dir:
        try:
            # Import config here to avoid circular imports
            from config import get_log_max_bytes
            os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                os.path.join(log_dir, "cavicrys.log"),
                maxBytes=get_log_max_bytes(),
                backupCount=3
            )
            file_handler.setLevel(logging.DEBUG if DEBUG_MODE else level)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            root.addHandler(file_handler)
        except OSError as e:
            logging.warning(f"Failed to set up log file in {log_dir}: {e}")

    _logging_configured = True
    setup_debug_logging()
    return root


def setup_debug_logging(logger_name: str = None) -> logging.Logger:
    """
    Setup debug logging configuration.
    Lowers the logger level to DEBUG when DEBUG_MODE is enabled.

    Args:
        logger_name: Name of the logger (default: root logger)

    Returns:
        Configured logger instance
    """
    global _debug_handler_setup

    logger = logging.getLogger(logger_name) if logger_name else logging.getLogger()

    if DEBUG_MODE:
        if logger.level > logging.DEBUG or logger.level == logging.NOTSET:
            logger.setLevel(logging.DEBUG)
        if not logger_name and not _debug_handler_setup:
            _debug_handler_setup = True
            logging.debug(f"Debug logging enabled for {logger_name or 'root logger'}")

    return logger


def log_debug(message: str, **kwargs):
    """
    Log a debug message with optional context.

    Args:
        message: Debug message to log
        **kwargs: Additional context to include in the log
    """
    if DEBUG_MODE:
        context = f" | Context: {json.dumps(kwargs, default=str)}" if kwargs else ""
        logging.debug(f"{message}{context}")


def log_error_with_context(
    error: Exception,
    context: str = "",
    additional_info: Optional[Dict[str, Any]] = None
) -> str:
    """
    Log an error with full context.

    Args:
        error: The exception that occurred
        context: Description of what was being done when the error occurred
        additional_info: Additional information to include in the log

    Returns:
        The error id used in the log record
    """
    error_type = type(error).__name__
    error_message = str(error)
    error_id = f"{error_type}:{sum(error_message.encode()) % 10000}"

    log_parts = [
        f"ERROR [{error_id}]: {error_type}: {error_message}"
    ]

    if context:
        log_parts.append(f"Context: {context}")

    if additional_info:
        log_parts.append(f"Additional Info: {json.dumps(additional_info, default=str)}")

    tb = traceback.format_exc()
    if tb and tb.strip() != 'NoneType: None':
        log_parts.append(f"Traceback:\n{tb}")

    logging.error("\n".join(log_parts))
    log_debug("Error details", error_id=error_id, error_type=error_type, context=context)
    return error_id


def log_function_entry(func_name: str, **kwargs):
    """
    Log entry into a function with parameters (debug only).

    Args:
        func_name: Name of the function
        **kwargs: Function parameters to log
    """
    if DEBUG_MODE:
        params = f" with params: {json.dumps(kwargs, default=str)}" if kwargs else ""
        logging.debug(f"ENTER {func_name}{params}")


def log_function_exit(func_name: str, result: Any = None):
    """
    Log exit from a function with result (debug only).

    Args:
        func_name: Name of the function
        result: Result to log (optional)
    """
    if DEBUG_MODE:
        result_str = f" -> {result}" if result is not None else ""
        logging.debug(f"EXIT {func_name}{result_str}")
