"""Exception hierarchy shared across the package."""


class XtraceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidCellError(XtraceError, ValueError):
    """Unit cell parameters do not describe a valid lattice."""


class GeometryError(XtraceError, ValueError):
    """Detector or beam geometry is degenerate (zero-length vector, bad axis)."""


class OutOfBoundsError(XtraceError, IndexError):
    """A pixel index lies outside the detector grid."""


class ShapeMismatchError(XtraceError, ValueError):
    """Buffer dimensions do not match the detector or each other."""


class NumericalFault(XtraceError, ArithmeticError):
    """A kernel produced a non-finite value.  Carries the offending pixel."""

    def __init__(self, pixel: int, message: str = ""):
        self.pixel = pixel
        super().__init__(message or f"non-finite value at pixel {pixel}")


class PatternFault(XtraceError, RuntimeError):
    """An execution-pattern body raised.  Carries the first failing index."""

    def __init__(self, label: str, index: int, cause: BaseException):
        self.label = label
        self.index = index
        self.cause = cause
        super().__init__(f"pattern {label!r} failed at index {index}: {cause!r}")


class ParseError(XtraceError, ValueError):
    """A text input file is malformed.  Carries file path and line number."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ConfigError(XtraceError, ValueError):
    """A configuration file is invalid.  Message names the offending key."""


class CampaignIOError(XtraceError, OSError):
    """Writing a campaign image failed.  Carries the image index."""

    def __init__(self, image_index: int, cause: BaseException):
        self.image_index = image_index
        self.cause = cause
        super().__init__(f"I/O failure on image {image_index}: {cause}")
