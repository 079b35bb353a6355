"""Exception hierarchy shared by all shearguard modules."""


class ShearguardError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(ShearguardError, ValueError):
    pass


class InvalidInputError(ShearguardError, TypeError):
    """Input kind does not match what the consumer expects."""


class KeyMismatchError(ShearguardError):
    """Coefficients and shearlet system were produced from different keys."""


class WireError(ShearguardError):
    pass


class FormatError(WireError):
    pass


class IntegrityError(WireError):
    """Checksum did not match the received bytes."""


class LengthError(WireError):
    pass


class EncodingError(WireError):
    pass


class ProtocolError(ShearguardError):
    """A batch violated the owner/trainer exchange rules."""
