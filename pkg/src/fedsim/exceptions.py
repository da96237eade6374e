"""Error types shared across the package."""


class FedsimError(Exception):
    """Base class for all package errors."""


class ValidationError(FedsimError, ValueError):
    """An input violates a value-level precondition (range, emptiness, finiteness)."""


class StructuralError(FedsimError, ValueError):
    """Shapes, lengths or layer layouts do not line up."""


class FormatError(FedsimError, ValueError):
    """A binary input file does not match its declared on-disk format."""


class TrainingError(FedsimError, RuntimeError):
    """Local training diverged or otherwise failed."""
