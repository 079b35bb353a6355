"""IDX (MNIST-style) and IMGF raster files.

IDX files are big-endian: magic ``0x00000803`` + count, rows, cols for
images (unsigned bytes), ``0x00000801`` + count for labels.  Paths ending in
``.gz`` are transparently (de)compressed.

IMGF is a float raster: ``b"IMGF"``, u32 height, u32 width, then
``height * width`` little-endian f32 samples, row-major.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IMGF_MAGIC = b"IMGF"


def _read(path: str | Path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 keeps reruns byte-identical
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


def read_idx_images(path: str | Path) -> np.ndarray:
    """Return an ``(n, rows, cols)`` float array scaled to [0, 1]."""
    data = _read(path)
    if len(data) < 16:
        raise LengthError(f"{path}: IDX image header truncated")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{path}: expected IDX image magic 0x803, got {magic:#x}")
    if len(data) != 16 + n * rows * cols:
        raise LengthError(f"{path}: expected {n * rows * cols} pixel bytes, got {len(data) - 16}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows, cols).astype(float) / 255.0


def read_idx_labels(path: str | Path) -> np.ndarray:
    data = _read(path)
    if len(data) < 8:
        raise LengthError(f"{path}: IDX label header truncated")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{path}: expected IDX label magic 0x801, got {magic:#x}")
    if len(data) != 8 + n:
        raise LengthError(f"{path}: expected {n} labels, got {len(data) - 8}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None]
    pixels = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = pixels.shape
    _write(path, struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes())


def write_idx_labels(path: str | Path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def write_imgf(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image)
    h, w = image.shape
    Path(path).write_bytes(IMGF_MAGIC + struct.pack("<II", h, w) + image.astype("<f4").tobytes())


def read_imgf(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != IMGF_MAGIC:
        raise FormatError(f"{path}: not an IMGF raster")
    h, w = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * h * w:
        raise LengthError(f"{path}: IMGF size does not match {h}x{w}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(float)


def read_image(path: str | Path, index: int = 0) -> np.ndarray:
    """Load one image from either an IMGF raster or an IDX image file."""
    head = _read(path)[:4]
    if head == IMGF_MAGIC:
        return read_imgf(path)
    images = read_idx_images(path)
    if not 0 <= index < len(images):
        raise IndexError(f"image index {index} out of range for {len(images)} images")
    return images[index]
