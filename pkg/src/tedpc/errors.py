"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems exit 2, configuration
problems exit 3, internal invariant breaches exit 4.
"""


class TedpcError(Exception):
    """Base class for all package errors."""


class DataFormatError(TedpcError):
    """An input file is missing required structure or contains a bad row."""


class ConfigError(TedpcError):
    """A run configuration value violates its constraints."""


class GenerationError(TedpcError):
    """A synthetic-cohort request cannot satisfy its own constraints."""


class InvariantError(TedpcError):
    """An internal output invariant was violated; indicates a bug."""
