"""Forward (owner-side) and inverse (model-side) shearlet transforms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, KeyMismatchError
from .shearlet_core import BoundaryMode, ShearletSystem

COMPLEX_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Per-band complex coefficient grids, lowpass band last.

    ``bands`` has shape ``(num_bands, H, W)``.  This is the only
    representation of an image that leaves its owner.
    """

    bands: np.ndarray
    num_scales: int
    shears_per_scale: tuple[int, ...]
    boundary_mode: BoundaryMode
    key_fingerprint: int

    def __post_init__(self):
        bands = np.asarray(self.bands)
        if bands.ndim != 3 or bands.shape[0] == 0:
            raise InvalidParameterError("coefficient set needs a (bands, H, W) array with at least one band")
        expected = sum(self.shears_per_scale) + 1
        if bands.shape[0] != expected or len(self.shears_per_scale) != self.num_scales:
            raise InvalidParameterError(
                f"band count {bands.shape[0]} does not match shears {self.shears_per_scale}"
            )
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "shears_per_scale", tuple(self.shears_per_scale))
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))

    @property
    def height(self) -> int:
        return self.bands.shape[1]

    @property
    def width(self) -> int:
        return self.bands.shape[2]

    @property
    def num_bands(self) -> int:
        return self.bands.shape[0]


def _check_image_shape(x: np.ndarray, system: ShearletSystem) -> None:
    if x.shape[-2:] != system.shape:
        raise InvalidParameterError(f"image shape {x.shape[-2:]} does not match system {system.shape}")


def analyze(images: np.ndarray, system: ShearletSystem) -> np.ndarray:
    """Vectorized ``shdec`` on raw arrays: ``(..., H, W) -> (..., bands, H, W)``."""
    images = np.asarray(images, dtype=float)
    _check_image_shape(images, system)
    spectrum = np.fft.fft2(images)[..., None, :, :]
    filt = np.conj(system.analysis_stack) * system.phase_mask
    return np.fft.ifft2(spectrum * filt)


def synthesize(coeffs: np.ndarray, system: ShearletSystem, clamp: bool = True) -> np.ndarray:
    """Vectorized ``shrec`` on raw arrays: ``(..., bands, H, W) -> (..., H, W)``."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-3:] != (system.num_bands, *system.shape):
        raise InvalidParameterError(
            f"coefficient shape {coeffs.shape[-3:]} does not match system "
            f"({system.num_bands}, {system.height}, {system.width})"
        )
    spectrum = np.fft.fft2(coeffs) * (np.conj(system.phase_mask) * system.analysis_stack)
    out = np.fft.ifft2(spectrum.sum(axis=-3) / system.synthesis_weights).real
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def shdec(x: np.ndarray, system: ShearletSystem) -> CoefficientSet:
    """Decompose one image into keyed shearlet coefficients."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InvalidParameterError(f"expected a single 2-D image, got shape {x.shape}")
    spec = system.spec
    return CoefficientSet(
        bands=analyze(x, system),
        num_scales=spec.num_scales,
        shears_per_scale=spec.shears_per_scale,
        boundary_mode=spec.boundary_mode,
        key_fingerprint=system.fingerprint,
    )


def check_compatible(c: CoefficientSet, system: ShearletSystem, force: bool = False) -> None:
    if c.key_fingerprint != system.fingerprint and not force:
        raise KeyMismatchError(
            f"coefficients carry key {c.key_fingerprint:016x}, system is {system.fingerprint:016x}"
        )
    if (c.num_bands, c.height, c.width) != (system.num_bands, *system.shape):
        raise InvalidParameterError(
            f"coefficient layout {(c.num_bands, c.height, c.width)} does not match system "
            f"{(system.num_bands, *system.shape)}"
        )


def shrec(
    c: CoefficientSet, system: ShearletSystem, force: bool = False, clamp: bool = True
) -> np.ndarray:
    """Reconstruct an image from coefficients by dual-frame synthesis.

    ``force`` skips the key fingerprint check (wrong-key experiments only).
    """
    check_compatible(c, system, force)
    return synthesize(c.bands, system, clamp=clamp)


def shrec_batch(
    cs: Sequence[CoefficientSet], system: ShearletSystem, force: bool = False, clamp: bool = True
) -> np.ndarray:
    for c in cs:
        check_compatible(c, system, force)
    return synthesize(np.stack([c.bands for c in cs]), system, clamp=clamp)


@dataclass(frozen=True)
class CoefficientStats:
    band_energy: np.ndarray
    max_modulus: np.ndarray
    complex_fraction: float

    @property
    def total_energy(self) -> float:
        return float(self.band_energy.sum())


def coefficient_stats(c: CoefficientSet) -> CoefficientStats:
    mod = np.abs(c.bands)
    return CoefficientStats(
        band_energy=np.sum(mod**2, axis=(1, 2)),
        max_modulus=mod.max(axis=(1, 2)),
        complex_fraction=float(np.mean(np.abs(c.bands.imag) > COMPLEX_THRESHOLD)),
    )


def relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    reference = np.asarray(reference, dtype=float)
    return float(np.linalg.norm(estimate - reference) / np.linalg.norm(reference))
