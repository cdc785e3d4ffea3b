"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented contract (bad manifest,
    inconsistent shapes, out-of-range indices, ...)."""


class TensorFormatError(ValidationError):
    """Raised when a tensor container file is malformed."""
