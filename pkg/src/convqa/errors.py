"""Exception types shared across the engine."""


class ConvqaError(Exception):
    """Base class for all engine errors."""


class ParseError(ConvqaError):
    """Raised when an input file cannot be decoded or lacks required structure."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class CorpusValidationError(ConvqaError):
    """Raised when corpus content violates an invariant (bad offsets, duplicate ids, ...)."""

    def __init__(self, message: str, dialogue_id: str | None = None, turn_index: int | None = None):
        super().__init__(message)
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index


class ConfigError(ConvqaError):
    """Raised for invalid configuration values."""


class UsageError(ConvqaError, ValueError):
    """Raised when an operation is called outside its contract."""


class BuildError(ConvqaError):
    """Raised when a model input cannot be assembled within the size budget."""


class CheckpointError(ConvqaError):
    """Raised for unreadable, corrupt, or incompatible checkpoint files."""
