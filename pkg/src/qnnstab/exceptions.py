"""Exception and warning types raised across the package."""


class QNNStabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QNNStabError, ValueError):
    """A parameter is outside its admissible range (qubit cap, noise level, ...)."""


class ContractError(QNNStabError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class IngestionError(QNNStabError, ValueError):
    """A dataset file could not be read."""


class BadMagicError(IngestionError):
    pass


class TruncatedFileError(IngestionError):
    pass


class CountMismatchError(IngestionError):
    pass


class InsufficientDataError(IngestionError):
    pass


class BoundOverflowWarning(RuntimeWarning):
    """A bound exceeded the float range; ``math.inf`` was returned instead."""
