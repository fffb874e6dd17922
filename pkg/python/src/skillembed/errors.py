"""Exception types shared by every skillembed module."""


class SkillEmbedError(Exception):
    """Base class for all skillembed errors."""
    pass


class ConfigurationError(SkillEmbedError):
    """Raised for invalid configuration: bad dimensions, unknown keys or values."""
    pass


class UsageError(SkillEmbedError):
    """Raised when an operation is called outside its contract."""
    pass


class DivergenceError(SkillEmbedError):
    """Raised when a loss or gradient stops being finite; aborts the run."""
    pass


class CheckpointError(SkillEmbedError):
    """Raised for malformed, truncated or tampered checkpoint data."""
    pass
