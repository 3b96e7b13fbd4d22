"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, OSError -> 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Input data violates a documented precondition."""


class DatasetVersionError(DataError):
    """On-disk dataset was written with an unsupported format version."""


class DatasetChecksumError(DataError):
    """A dataset file does not match its manifest checksum."""


class DatasetTruncatedError(DataError):
    """A dataset file is missing or shorter than the manifest requires."""
