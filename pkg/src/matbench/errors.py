"""Exception types shared across the benchmark package."""

from __future__ import annotations


class MatbenchError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(MatbenchError):
    """Malformed line-oriented input (manifest, FVEC, model, network spec)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(MatbenchError):
    """An image id appears twice within one category or within the negative pool."""


class UnknownCategory(MatbenchError):
    pass


class EmptyCategory(MatbenchError):
    pass


class EmptyNegativeTrain(MatbenchError):
    """No sibling categories exist to supply negative training images."""


class NegativePoolTooSmall(MatbenchError):
    def __init__(self, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(
            f"negative pool holds {available} ids, {needed} required"
        )


class ShapeMismatch(MatbenchError):
    pass


class InvalidSpec(MatbenchError):
    pass


class NonPositiveOutput(MatbenchError):
    """A layer's spatial output dimension came out below one."""


class CenterOutOfBounds(MatbenchError):
    pass


class DegeneratePatch(MatbenchError):
    """Requested patch side rounds below one pixel."""


class MixedDimensions(MatbenchError):
    pass


class DimensionMismatch(MatbenchError):
    pass


class SingleClassData(MatbenchError):
    """Training data contains only one of the two labels."""


class NonFiniteFeature(MatbenchError):
    pass


class NoRelevantItems(MatbenchError):
    pass


class EmptyInput(MatbenchError):
    pass


class MissingCommonCategory(MatbenchError):
    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(f"missing common categories: {', '.join(self.missing)}")


class UnsupportedFormat(MatbenchError):
    pass


class CorruptHeader(MatbenchError):
    pass


class StageError(MatbenchError):
    """A pipeline stage failed; wraps the original error with its stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
