"""Exception types shared across the package."""


class DDoSEnsembleError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(DDoSEnsembleError, ValueError):
    """Array shapes do not conform to a layer or model."""


class EmptyInputError(DDoSEnsembleError, ValueError):
    """An operation received zero rows/elements where at least one is required."""


class StateError(DDoSEnsembleError, RuntimeError):
    """An object was used out of order (e.g. backward before forward)."""


class InputError(DDoSEnsembleError, ValueError):
    """Malformed values (labels, probabilities, lengths)."""


class FormatError(DDoSEnsembleError, ValueError):
    """A file does not follow the expected layout."""


class SchemaError(DDoSEnsembleError, ValueError):
    """Tables disagree on their column sets."""


class SelectionError(DDoSEnsembleError, KeyError):
    """A requested feature column is not available."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(DDoSEnsembleError, ValueError):
    """Invalid configuration keys or values."""
