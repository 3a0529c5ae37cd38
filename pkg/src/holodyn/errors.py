"""Exception hierarchy shared by every holodyn layer."""


class HolodynError(Exception):
    """Base class for all holodyn errors."""


class DimensionError(HolodynError, ValueError):
    """Operands have incompatible or invalid shapes."""


class NumericError(HolodynError, ValueError):
    """Input or intermediate values are not finite."""


class DegeneracyError(HolodynError):
    """A frame or partial product lost rank."""


class ConfigError(HolodynError, ValueError):
    """Base class for configuration validation failures."""


class UnknownModelError(ConfigError):
    pass


class MissingParameterError(ConfigError):
    pass


class NonHermitianError(ConfigError):
    pass


class FrameSpecError(ConfigError):
    pass


class ValidationError(ConfigError):
    """Out-of-range or malformed scalar setting."""


class PropagationError(HolodynError):
    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time!r})")
        self.time = time


class DecompositionError(HolodynError):
    pass


class InsufficientGridError(DecompositionError):
    pass
