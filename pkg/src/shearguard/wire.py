"""SHC1 coefficient payloads.

Layout (little-endian, no padding)::

    magic            4s   b"SHC1"
    version          u8
    flags            u8   bit0 = truncated (complex) mode
    height, width    u32 u32
    num_scales       u8
    label            u16
    owner_id         u32
    sequence         u64
    key_fingerprint  u64
    shears           num_scales x u8
    coefficients     num_bands x H x W x (f32 real, f32 imag), row-major
    crc32            u32  over every preceding byte, magic included

``num_bands = sum(shears) + 1``; the lowpass band is last.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import CoefficientSet
from .errors import EncodingError, FormatError, IntegrityError, InvalidParameterError, LengthError
from .shearlet_core import BoundaryMode

MAGIC = b"SHC1"
VERSION = 1
FLAG_TRUNCATED = 0x0001

_HEADER = struct.Struct("<BBIIBHIQQ")
HEADER_SIZE = len(MAGIC) + _HEADER.size  # 37
CRC_SIZE = 4
MIN_SIZE = HEADER_SIZE + CRC_SIZE  # 41
_COEFF_DTYPE = np.dtype("<c8")


@dataclass(frozen=True, eq=False)
class Payload:
    version: int
    flags: int
    height: int
    width: int
    num_scales: int
    shears_per_scale: tuple[int, ...]
    label: int
    owner_id: int
    sequence: int
    key_fingerprint: int
    coefficients: np.ndarray  # (num_bands, H, W) complex64

    @property
    def boundary_mode(self) -> BoundaryMode:
        return BoundaryMode.TRUNCATED if self.flags & FLAG_TRUNCATED else BoundaryMode.SYMMETRIC

    def to_coefficient_set(self) -> CoefficientSet:
        return CoefficientSet(
            bands=self.coefficients.astype(np.complex128),
            num_scales=self.num_scales,
            shears_per_scale=self.shears_per_scale,
            boundary_mode=self.boundary_mode,
            key_fingerprint=self.key_fingerprint,
        )

    def header_fields(self) -> dict[str, object]:
        return {
            "version": self.version,
            "flags": self.flags,
            "mode": self.boundary_mode.value,
            "height": self.height,
            "width": self.width,
            "num_scales": self.num_scales,
            "shears_per_scale": list(self.shears_per_scale),
            "num_bands": self.coefficients.shape[0],
            "label": self.label,
            "owner_id": self.owner_id,
            "sequence": self.sequence,
            "key_fingerprint": f"{self.key_fingerprint:016x}",
        }

    def same_as(self, other: "Payload") -> bool:
        """Field-wise equality with bit-level comparison of coefficients."""
        scalars = (
            "version", "flags", "height", "width", "num_scales", "shears_per_scale",
            "label", "owner_id", "sequence", "key_fingerprint",
        )
        if any(getattr(self, f) != getattr(other, f) for f in scalars):
            return False
        a, b = self.coefficients, other.coefficients
        return a.shape == b.shape and a.tobytes() == b.tobytes()


def payload_size(height: int, width: int, shears_per_scale) -> int:
    num_bands = sum(shears_per_scale) + 1
    return HEADER_SIZE + len(shears_per_scale) + num_bands * height * width * 8 + CRC_SIZE


def encode_payload(c: CoefficientSet, label: int, owner_id: int, sequence: int) -> bytes:
    if c.bands.size == 0:
        raise EncodingError("empty coefficient set")
    if not 0 <= label < 1 << 16:
        raise EncodingError(f"label {label} does not fit in u16")
    if not 0 <= owner_id < 1 << 32:
        raise EncodingError(f"owner id {owner_id} does not fit in u32")
    if not 0 <= sequence < 1 << 64:
        raise EncodingError(f"sequence {sequence} does not fit in u64")
    if any(not 1 <= n <= 255 for n in c.shears_per_scale) or c.num_scales > 255:
        raise EncodingError("shear layout does not fit the header")
    with np.errstate(over="ignore", invalid="ignore"):
        quantized = np.ascontiguousarray(c.bands, dtype=_COEFF_DTYPE)
    if not (np.all(np.isfinite(c.bands)) and np.all(np.isfinite(quantized))):
        raise EncodingError("coefficients must be finite in float32")
    flags = FLAG_TRUNCATED if c.boundary_mode is BoundaryMode.TRUNCATED else 0
    body = b"".join(
        [
            MAGIC,
            _HEADER.pack(
                VERSION, flags, c.height, c.width, c.num_scales, label, owner_id,
                sequence, c.key_fingerprint,
            ),
            bytes(c.shears_per_scale),
            quantized.tobytes(),
        ]
    )
    return body + struct.pack("<I", zlib.crc32(body))


def decode_payload(data: bytes) -> Payload:
    data = bytes(data)
    if len(data) < MIN_SIZE:
        raise LengthError(f"payload is {len(data)} bytes, minimum is {MIN_SIZE}")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - CRC_SIZE)
    if zlib.crc32(data[:-CRC_SIZE]) != stored_crc:
        raise IntegrityError("CRC-32 mismatch")
    version, flags, height, width, num_scales, label, owner, seq, fp = _HEADER.unpack_from(data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if flags & ~FLAG_TRUNCATED:
        raise FormatError(f"unknown flag bits {flags:#06x}")
    if num_scales < 1 or height < 1 or width < 1:
        raise FormatError("header declares an empty layout")
    if len(data) < HEADER_SIZE + num_scales + CRC_SIZE:
        raise LengthError("payload too short for its shear table")
    shears = tuple(data[HEADER_SIZE : HEADER_SIZE + num_scales])
    expected = payload_size(height, width, shears)
    if len(data) != expected:
        raise LengthError(f"payload is {len(data)} bytes, header implies {expected}")
    start = HEADER_SIZE + num_scales
    coeffs = np.frombuffer(data, dtype=_COEFF_DTYPE, count=(sum(shears) + 1) * height * width, offset=start)
    coeffs = coeffs.reshape(sum(shears) + 1, height, width)
    return Payload(
        version=version,
        flags=flags,
        height=height,
        width=width,
        num_scales=num_scales,
        shears_per_scale=shears,
        label=label,
        owner_id=owner,
        sequence=seq,
        key_fingerprint=fp,
        coefficients=coeffs,
    )


def payload_path(root: str | Path, owner_id: int, sequence: int) -> Path:
    """``<root>/<owner_id>/<sequence>.shc`` exchange-directory convention."""
    if owner_id < 0 or sequence < 0:
        raise InvalidParameterError("owner id and sequence must be non-negative")
    return Path(root) / str(owner_id) / f"{sequence}.shc"


def write_payload(root: str | Path, data: bytes) -> Path:
    p = decode_payload(data)
    path = payload_path(root, p.owner_id, p.sequence)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


def read_payloads(root: str | Path) -> list[bytes]:
    """All payload files under ``root``, ordered by (owner_id, sequence)."""
    found = []
    for path in Path(root).glob("*/*.shc"):
        try:
            key = (int(path.parent.name), int(path.stem))
        except ValueError:
            continue
        found.append((key, path))
    return [path.read_bytes() for _, path in sorted(found)]
