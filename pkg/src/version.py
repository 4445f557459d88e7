"""Version information for cavicrys"""

__version__ = "0.3.0"

# Bumped when a CSV column or JSON field is removed, renamed or redefined.
SCHEMA_VERSION = 1
