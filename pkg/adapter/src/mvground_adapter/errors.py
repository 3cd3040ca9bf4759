"""Exception hierarchy for the adapter package."""


class AdapterError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigInvalid(AdapterError):
    """A configuration value is missing, unknown, or out of range."""


class BackendError(AdapterError):
    """A model backend is unreachable, misbehaving, or cannot serve a request."""
