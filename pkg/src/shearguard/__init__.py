"""Keyed shearlet encryption of training images with in-model decryption."""

from .codec import CoefficientSet, coefficient_stats, shdec, shrec
from .errors import (
    EncodingError,
    FormatError,
    IntegrityError,
    InvalidInputError,
    InvalidParameterError,
    KeyMismatchError,
    LengthError,
    ProtocolError,
    ShearguardError,
    WireError,
)
from .shearlet_core import (
    BoundaryMode,
    GeneratorSpec,
    ShearletSystem,
    build_system,
    derive_key,
    frame_bounds,
)
from .wire import Payload, decode_payload, encode_payload

__version__ = "0.1.0"
