"""Exception hierarchy shared by all rnnpress modules."""


class RnnPressError(Exception):
    """Base class for every error raised by rnnpress."""


class ArgumentError(RnnPressError, ValueError):
    """Invalid argument: bad shape, out-of-range rank, malformed flag value."""


class StateError(RnnPressError):
    """Operation not valid for the object's current state (e.g. already compressed)."""


class NumericalError(RnnPressError):
    """A numerical routine could not produce a trustworthy answer."""

    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class ConvergenceError(NumericalError):
    """Iterative solver exceeded its iteration cap."""


class SingularMatrixError(NumericalError):
    """Gram matrix too ill-conditioned for the general least-squares path."""


class DegenerateSpectrumError(NumericalError):
    """Spectrum is identically zero; explained variance is undefined."""


class LoadError(RnnPressError):
    """Container file could not be decoded."""


class BadMagicError(LoadError):
    pass


class VersionError(LoadError):
    pass


class TruncatedPayloadError(LoadError):
    pass


class ShapeMismatchError(LoadError):
    pass


class NonFiniteError(LoadError):
    pass


class HeaderError(LoadError):
    """Header JSON is unparsable or missing required fields."""
