"""Exception types raised across the package."""


class GasError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(GasError):
    pass


class ZeroDimension(GasError):
    pass


class OutOfBounds(GasError):
    pass


class NegativeSample(GasError):
    pass


class DegenerateKernel(GasError):
    pass


class TapeReuse(GasError):
    """A backward pass was asked to consume a tape a second time."""


class SchemaVersionMismatch(GasError):
    pass


class MissingField(GasError):
    pass


class UnknownField(GasError):
    pass


class InputTooSmall(GasError):
    pass


class ImageTooSmall(GasError):
    pass


class NanGradient(GasError):
    pass


class BinningMismatch(GasError):
    pass


class TrainingHalted(GasError):
    """Raised when a non-finite loss stops training.

    ``checkpoint`` points at the directory holding the last good state.
    """

    def __init__(self, message, checkpoint=None, step=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.step = step
