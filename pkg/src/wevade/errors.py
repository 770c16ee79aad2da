"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Shapes or lengths that must agree do not."""


class CapacityError(ValueError):
    """Image too small to carry the requested watermark."""


class ImageFormatError(ValueError):
    """File is readable but not a supported image format."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class InfeasibleError(ValueError):
    """No admissible value satisfies the requested bound or target."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class MonotonicityError(RuntimeError):
    """An empirically monotone response was observed to go the wrong way."""


class TrainingFailure(RuntimeError):
    """Training finished without reaching the round-trip accuracy gate."""

    def __init__(self, message, codec=None, accuracy=None):
        super().__init__(message)
        self.codec = codec
        self.accuracy = accuracy


class InitializationError(RuntimeError):
    """A black-box attack could not find any non-detected starting image."""


class BudgetExhausted(RuntimeError):
    """Query budget ran out in the middle of a black-box step."""

    def __init__(self, message, best=None, queries=0):
        super().__init__(message)
        self.best = best
        self.queries = queries


class IngestionError(RuntimeError):
    """Dataset directory cannot supply the requested sample."""
