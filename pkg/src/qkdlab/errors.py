"""Exception hierarchy shared by every qkdlab module."""


class QkdLabError(Exception):
    """Base class for all qkdlab errors."""


class ConfigurationError(QkdLabError, ValueError):
    """Bad construction arguments: wrong lengths, duplicate labels, bad config."""


class AddressingError(QkdLabError, KeyError):
    """A gate or measurement addressed a qubit label that is not usable."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvariantViolation(QkdLabError, RuntimeError):
    """A physical invariant failed, e.g. discarding a still-entangled qubit."""


class InternalConsistencyError(QkdLabError, RuntimeError):
    """Numerics drifted beyond tolerance (probabilities, unitarity)."""


class ProtocolSequencingError(QkdLabError, RuntimeError):
    """A protocol step was invoked in the wrong order."""
