"""Exception types raised by the library."""


class BoolpercError(Exception):
    """Base class for library errors."""


class InvalidMeasure(BoolpercError, ValueError):
    pass


class InvalidScale(BoolpercError, ValueError):
    pass


class NotAMeasure(BoolpercError, ValueError):
    """``F + hG`` has a negative component, so ``h`` is outside the admissible cone."""


class InvalidQuantile(BoolpercError, ValueError):
    pass


class TooManyPoints(BoolpercError, RuntimeError):
    pass


class WindowMismatch(BoolpercError, ValueError):
    pass


class InvalidMark(BoolpercError, ValueError):
    pass


class TargetTooLarge(BoolpercError, ValueError):
    pass


class NoBracket(BoolpercError, RuntimeError):
    pass


class DimensionError(BoolpercError, ValueError):
    pass
