"""Bridge error types."""


class BridgeError(Exception):
    """Base class for bridge failures."""


class ModelLoadError(BridgeError):
    """The encoder spec names nothing loadable."""


class SchemaError(BridgeError):
    """Raw dataset records do not match the pinned schema."""
