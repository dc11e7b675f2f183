"""Exception types shared across the package."""


class FrescoError(Exception):
    """Base class for all package errors."""


class PuzzleFormatError(FrescoError):
    """The on-disk puzzle directory does not match the expected format."""


class ValidationError(FrescoError):
    """Decoded data violates a structural invariant (bad mask, pose, ...)."""


class SessionError(FrescoError):
    """An interactive-session command is invalid in the current state."""
