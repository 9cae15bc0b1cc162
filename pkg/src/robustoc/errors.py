class RobustOCError(Exception):
    """Base class for all errors raised by robustoc."""


class InvalidGridError(RobustOCError, ValueError):
    pass


class InvalidParameterError(RobustOCError, ValueError):
    pass


class ShapeError(RobustOCError, ValueError):
    pass


class InvalidInputError(RobustOCError, ValueError):
    pass


class InvalidDistortionError(RobustOCError, ValueError):
    pass


class NoOptimumFoundError(RobustOCError, RuntimeError):
    pass


class MonotonicityViolationError(RobustOCError, RuntimeError):
    """Raised when an optimizer iteration increases the cost (step weight too small)."""


class NotAtOptimumError(RobustOCError, ValueError):
    pass


class InvalidSpectrumError(RobustOCError, ValueError):
    pass


class DegenerateInversionError(RobustOCError, ValueError):
    """The average cost does not depend on the tolerance (four curvature modes)."""


class AmbiguousInversionError(RobustOCError, ValueError):
    pass


class InsufficientDataError(RobustOCError, ValueError):
    pass


class EmptyInputError(RobustOCError, ValueError):
    pass
