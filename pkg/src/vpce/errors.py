"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto process exit codes: validation problems exit 2,
numeric/runtime failures exit 3, and I/O failures exit 4.
"""


class VpceError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ValidationError(VpceError):
    """Bad inputs: violated preconditions, malformed files, config mismatches."""

    exit_code = 2


class NumericError(VpceError):
    """Well-formed inputs on which the requested quantity is undefined."""

    exit_code = 3


class EnvironmentInfeasibleError(VpceError):
    """The arena admits no valid pose (or no feasible exploration start)."""

    exit_code = 3


class DataFormatError(ValidationError):
    """An artifact file does not match its documented schema."""
