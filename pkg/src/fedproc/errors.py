"""Exception hierarchy shared by every module."""


class FedProcError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedProcError, ValueError):
    """Invalid hyperparameters, layer shapes or network specs."""


class UsageError(FedProcError, ValueError):
    """An operation was called outside its preconditions."""


class DegenerateInputError(FedProcError, ValueError):
    """Zero-norm vectors fed to cosine similarity."""


class ProtocolError(FedProcError):
    """Federation invariants broken (missing prototypes, shape drift)."""


class IngestionError(FedProcError):
    """Malformed dataset file."""
