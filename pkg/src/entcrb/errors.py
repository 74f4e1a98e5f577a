"""Exception hierarchy. Every error is a ``ValueError`` so callers that only
care about bad input can catch that."""


class EntcrbError(ValueError):
    """Base class for all package errors."""


class InvalidArgument(EntcrbError):
    pass


class UnreachableNegativity(EntcrbError):
    """Requested negativity exceeds what the mixing parameter allows."""


class DerivativeSingularity(EntcrbError):
    """A finite-difference stencil would leave the parameter domain."""


class DegenerateAngles(EntcrbError):
    """Polarizer angles make the negativity estimator undefined (sin 2a or sin 2b ~ 0)."""


class EmptySample(EntcrbError):
    pass


class DegenerateDiagonal(EntcrbError):
    """Diagonal-setting counts have r3 = 0 or r3 = R, so the mixing estimator is undefined."""


class IllPosedSettings(EntcrbError):
    """Tomography settings do not span the operator space."""


class ConfigError(EntcrbError):
    pass
