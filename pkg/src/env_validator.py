"""
Environment variable validation module for cavicrys.

This module validates the optional environment settings before a run.
"""

import os
import sys
import logging
from typing import List, Tuple

from config import DEFAULT_LOG_MAX_BYTES, DEFAULT_MAX_WORKERS


def validate_env_vars() -> Tuple[bool, List[str]]:
    """
    Validate optional environment variables.

    Returns:
        Tuple of (is_valid, error_messages)
    """
    errors = []
    warnings = []

    # Validate numeric values
    numeric_vars = {
        'CAVICRYS_THREADS': (1, 256),
        'CAVICRYS_LOG_MAX_BYTES': (1024, 1073741824),  # 1KB to 1GB
    }

    for var, (min_val, max_val) in numeric_vars.items():
        value = os.environ.get(var)
        if value:
            try:
                num_value = int(value)
                if num_value < min_val or num_value > max_val:
                    errors.append(f"Environment variable '{var}' must be between {min_val} and {max_val}, got {num_value}")
            except ValueError:
                errors.append(f"Environment variable '{var}' must be a valid integer, got '{value}'")

    # Check CAVICRYS_LOG_DIR if set
    log_dir = os.environ.get('CAVICRYS_LOG_DIR')
    if log_dir:
        if not os.path.exists(log_dir):
            warnings.append(f"CAVICRYS_LOG_DIR '{log_dir}' does not exist (will be created if needed)")
        elif not os.path.isdir(log_dir):
            errors.append(f"CAVICRYS_LOG_DIR '{log_dir}' exists but is not a directory")
        elif not os.access(log_dir, os.W_OK):
            errors.append(f"CAVICRYS_LOG_DIR '{log_dir}' is not writable")

    # Check DEBUG_MODE
    debug_mode = os.environ.get('DEBUG_MODE', 'false').lower()
    if debug_mode not in ['true', 'false', '1', '0', 'yes', 'no']:
        warnings.append(f"DEBUG_MODE has invalid value '{debug_mode}', should be true/false")

    # Log warnings
    for warning in warnings:
        logging.warning(warning)

    is_valid = len(errors) == 0
    return is_valid, errors


def print_env_summary(stream=sys.stderr):
    """Print a summary of current environment configuration."""
    print("\n" + "=" * 70, file=stream)
    print("cavicrys Environment Configuration", file=stream)
    print("=" * 70, file=stream)

    config = {
        'CAVICRYS_THREADS': os.environ.get('CAVICRYS_THREADS', str(DEFAULT_MAX_WORKERS)),
        'CAVICRYS_LOG_DIR': os.environ.get('CAVICRYS_LOG_DIR', 'NOT SET'),
        'CAVICRYS_LOG_MAX_BYTES': f"{int(os.environ.get('CAVICRYS_LOG_MAX_BYTES', DEFAULT_LOG_MAX_BYTES)) / 1024 / 1024:.1f}MB",
        'DEBUG_MODE': os.environ.get('DEBUG_MODE', 'false'),
    }

    for key, value in config.items():
        print(f"  {key:24} = {value}", file=stream)

    print("=" * 70 + "\n", file=stream)


def validate_and_exit_on_error():
    """
    Validate environment variables and exit with status 1 if validation fails.

    Called by start.sh before launching the command-line tool.
    """
    is_valid, errors = validate_env_vars()

    if not is_valid:
        print("\n" + "=" * 70, file=sys.stderr)
        print("ERROR: Environment validation failed", file=sys.stderr)
        print("=" * 70, file=sys.stderr)
        for error in errors:
            print(f"  ✗ {error}", file=sys.stderr)
        print("=" * 70 + "\n", file=sys.stderr)
        print("Please fix the above errors and try again.", file=sys.stderr)
        print("See README.md for environment variable documentation.\n", file=sys.stderr)
        sys.exit(1)

    print_env_summary()


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    validate_and_exit_on_error()
    print("✓ All environment variables are valid", file=sys.stderr)
