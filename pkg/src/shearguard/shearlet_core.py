"""Keyed digital shearlet systems.

A shearlet system is realized as an undecimated, frequency-domain filter bank
on an ``H x W`` grid.  The plane is split radially into ``J`` dyadic rings
plus a lowpass disc, and each ring is split angularly into wedges indexed by
a shear parameter.  Wedges are parameterized by the cone-adapted slope
coordinate (``xi_1 / xi_0`` on the horizontal cone, ``xi_0 / xi_1`` on the
vertical one), so neighbouring wedges of one ring are related by shearing.

The generator is keyed: a 64-bit seed fixes the window steepness, a rotation
of the wedge partition, and a unit-modulus phase mask multiplied into every
analysis filter.  The squared filter moduli are normalized to sum to one at
every frequency, which makes the system a tight frame independently of the
key.

Spatial conventions: images are ``(rows, cols)`` arrays.  Continuous
operators (``dilate``, ``translate``) act on points ``x = (x0, x1)`` measured
in pixels from the image center along axis 0 and axis 1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError

U64_MASK = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

SHARPNESS_RANGE = (1.0, 4.0)


class BoundaryMode(str, enum.Enum):
    SYMMETRIC = "symmetric"
    TRUNCATED = "truncated"


# ---------------------------------------------------------------------------
# Continuous-domain operators
# ---------------------------------------------------------------------------


def scaling_matrix(a: float) -> np.ndarray:
    """Parabolic scaling matrix ``diag(a, sqrt(|a|))``."""
    if a == 0 or not math.isfinite(a):
        raise InvalidParameterError(f"scaling parameter must be finite and nonzero, got {a}")
    return np.array([[a, 0.0], [0.0, math.sqrt(abs(a))]])


def shear_matrix(s: float) -> np.ndarray:
    if not math.isfinite(s):
        raise InvalidParameterError(f"shear parameter must be finite, got {s}")
    return np.array([[1.0, s], [0.0, 1.0]])


def _centered_lattice(shape: tuple[int, int]) -> np.ndarray:
    rows, cols = shape
    c0 = (rows - 1) / 2.0
    c1 = (cols - 1) / 2.0
    g0, g1 = np.meshgrid(np.arange(rows) - c0, np.arange(cols) - c1, indexing="ij")
    return np.stack([g0, g1])


def dilate(f: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return ``|det B|^(-1/2) f(B^-1 x)`` sampled on the pixel lattice.

    ``f`` is read by bilinear interpolation; points whose preimage falls
    outside the sampled support evaluate to zero.
    """
    f = np.asarray(f, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2):
        raise InvalidParameterError("dilation matrix must be 2x2")
    det = float(np.linalg.det(B))
    if abs(det) < 1e-12:
        raise InvalidParameterError("dilation matrix is singular")
    pts = _centered_lattice(f.shape)
    pre = np.einsum("ij,jab->iab", np.linalg.inv(B), pts)
    coords = np.stack([pre[0] + (f.shape[0] - 1) / 2.0, pre[1] + (f.shape[1] - 1) / 2.0])
    sampled = ndimage.map_coordinates(f, coords, order=1, mode="constant", cval=0.0)
    return abs(det) ** -0.5 * sampled


def translate(f: np.ndarray, t: Sequence[float]) -> np.ndarray:
    """Return ``f(x - t)`` with circular boundary handling.

    Integer shifts are exact lattice rolls; fractional shifts interpolate
    bilinearly on the periodized grid.
    """
    f = np.asarray(f, dtype=float)
    t0, t1 = (float(v) for v in t)
    if t0.is_integer() and t1.is_integer():
        return np.roll(f, (int(t0), int(t1)), axis=(0, 1))
    g0, g1 = np.meshgrid(np.arange(f.shape[0]), np.arange(f.shape[1]), indexing="ij")
    coords = np.stack([g0 - t0, g1 - t1])
    return ndimage.map_coordinates(f, coords, order=1, mode="grid-wrap")


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & U64_MASK
    return h


@dataclass(frozen=True)
class GeneratorSpec:
    """The shared secret defining a shearlet system."""

    seed: int
    num_scales: int
    shears_per_scale: tuple[int, ...]
    boundary_mode: BoundaryMode
    window_sharpness: float
    mask_enabled: bool = True

    def __post_init__(self):
        if not 0 <= self.seed <= U64_MASK:
            raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        _check_shears(self.num_scales, self.shears_per_scale)
        if not (self.window_sharpness > 0 and math.isfinite(self.window_sharpness)):
            raise InvalidParameterError("window_sharpness must be positive")
        object.__setattr__(self, "shears_per_scale", tuple(int(n) for n in self.shears_per_scale))
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))

    def canonical(self) -> bytes:
        shears = ",".join(str(n) for n in self.shears_per_scale)
        text = (
            f"seed={self.seed};scales={self.num_scales};shears={shears};"
            f"mode={self.boundary_mode.value};sharpness={self.window_sharpness!r};"
            f"mask={int(self.mask_enabled)}"
        )
        return text.encode("utf-8")

    @property
    def fingerprint(self) -> int:
        return fnv1a_64(self.canonical())

    @property
    def num_bands(self) -> int:
        """Directional bands plus the lowpass band."""
        return sum(self.shears_per_scale) + 1


def _check_shears(num_scales: int, shears: Sequence[int]) -> None:
    if int(num_scales) < 1:
        raise InvalidParameterError(f"number of scales must be >= 1, got {num_scales}")
    if len(shears) != num_scales:
        raise InvalidParameterError(
            f"expected {num_scales} shear counts, got {len(shears)}"
        )
    for n in shears:
        if int(n) != n or n < 1 or n % 2 == 0 or n > 255:
            raise InvalidParameterError(f"shear counts must be odd integers in [1, 255], got {n}")


def _key_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=stream))


def derive_key(
    seed: int,
    num_scales: int,
    shears_per_scale: Sequence[int],
    boundary_mode: BoundaryMode | str = BoundaryMode.TRUNCATED,
    mask_enabled: bool = True,
) -> GeneratorSpec:
    """Expand a seed into a full generator specification."""
    if not 0 <= int(seed) <= U64_MASK:
        raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    _check_shears(num_scales, list(shears_per_scale))
    lo, hi = SHARPNESS_RANGE
    sharpness = float(_key_rng(int(seed), 0).uniform(lo, hi))
    return GeneratorSpec(
        seed=int(seed),
        num_scales=int(num_scales),
        shears_per_scale=tuple(shears_per_scale),
        boundary_mode=BoundaryMode(boundary_mode),
        window_sharpness=sharpness,
        mask_enabled=bool(mask_enabled),
    )


def write_key_file(spec: GeneratorSpec, path: str | Path) -> None:
    # values are JSON literals so the file stays trivially parseable
    lines = [
        f"seed = {spec.seed}",
        f"scales = {spec.num_scales}",
        f"shears_per_scale = {json.dumps(list(spec.shears_per_scale))}",
        f"boundary_mode = {json.dumps(spec.boundary_mode.value)}",
        f"mask_enabled = {json.dumps(spec.mask_enabled)}",
        f'fingerprint = "{spec.fingerprint:016x}"',
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_key_file(path: str | Path) -> GeneratorSpec:
    fields: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise InvalidParameterError(f"{path}:{lineno}: expected 'name = value'")
        try:
            fields[name.strip()] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise InvalidParameterError(f"{path}:{lineno}: bad value {value.strip()!r}") from exc
    missing = {"seed", "scales", "shears_per_scale", "boundary_mode", "mask_enabled"} - fields.keys()
    if missing:
        raise InvalidParameterError(f"key file missing fields: {sorted(missing)}")
    spec = derive_key(
        int(fields["seed"]),
        int(fields["scales"]),
        list(fields["shears_per_scale"]),
        str(fields["boundary_mode"]),
        bool(fields["mask_enabled"]),
    )
    if "fingerprint" in fields and int(str(fields["fingerprint"]), 16) != spec.fingerprint:
        raise InvalidParameterError("key file fingerprint does not match its fields")
    return spec


# ---------------------------------------------------------------------------
# Filter bank
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShearletSystem:
    height: int
    width: int
    spec: GeneratorSpec
    band_filters: np.ndarray  # (num_directional, H, W) complex
    band_index: tuple[tuple[int, int], ...]  # (scale j, shear k) per band
    lowpass: np.ndarray
    phase_mask: np.ndarray
    fingerprint: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", self.spec.fingerprint)
        for arr in (self.band_filters, self.lowpass, self.phase_mask):
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def num_bands(self) -> int:
        return len(self.band_index) + 1

    @cached_property
    def analysis_stack(self) -> np.ndarray:
        """All filters, lowpass last, as ``(num_bands, H, W)``."""
        stack = np.concatenate([self.band_filters, self.lowpass[None]])
        stack.flags.writeable = False
        return stack

    @property
    def weight_grid(self) -> np.ndarray:
        return np.sum(np.abs(self.band_filters) ** 2, axis=0) + np.abs(self.lowpass) ** 2

    @cached_property
    def synthesis_weights(self) -> np.ndarray:
        w = self.weight_grid
        w.flags.writeable = False
        return w

    def band(self, j: int, k: int) -> int:
        try:
            return self.band_index.index((j, k))
        except ValueError:
            raise InvalidParameterError(f"no band with scale {j} and shear {k}") from None


def _meyer(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def _step(x: np.ndarray, sharpness: float) -> np.ndarray:
    # 0 below -0.5/sharpness, 1 above +0.5/sharpness
    return _meyer(x * sharpness + 0.5)


def _pseudo_angle(xi0: np.ndarray, xi1: np.ndarray) -> np.ndarray:
    """Position along the unit square's perimeter, in [0, 8).

    Inside each cone this is an affine function of the slope, so equal
    steps correspond to equal shears.
    """
    a, b = xi1, xi0
    u = np.zeros(np.broadcast(a, b).shape)
    aa, ab = np.abs(a), np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        right = (a > 0) & (ab <= aa)
        left = (a < 0) & (ab <= aa)
        top = (b > 0) & (aa < ab)
        bottom = (b < 0) & (aa < ab)
        u = np.where(right, 1 + b / a, u)
        u = np.where(top, 3 - a / b, u)
        u = np.where(left, 5 + b / a, u)
        u = np.where(bottom, 7 - a / b, u)
    return np.mod(u, 8.0)


def _mirror(grid: np.ndarray) -> np.ndarray:
    """``grid(-omega)`` on the FFT lattice."""
    return np.roll(np.flip(grid, axis=(-2, -1)), 1, axis=(-2, -1))


def hermitian_violation(grid: np.ndarray) -> float:
    """Max-norm of ``G(omega) - conj(G(-omega))``."""
    return float(np.max(np.abs(grid - np.conj(_mirror(grid)))))


def _phase_mask(spec: GeneratorSpec, height: int, width: int) -> np.ndarray:
    if not spec.mask_enabled:
        return np.ones((height, width), dtype=complex)
    phases = _key_rng(spec.seed, 2, height, width).uniform(0.0, 2 * np.pi, (height, width))
    mask = np.exp(1j * phases)
    if spec.boundary_mode is BoundaryMode.SYMMETRIC:
        # difference of two independent uniform phases is uniform; result is Hermitian
        mask = mask * np.conj(_mirror(mask))
        mask /= np.abs(mask)
    return mask


def build_system(spec: GeneratorSpec, height: int, width: int) -> ShearletSystem:
    """Realize ``spec`` as a normalized tight frame on an ``height x width`` grid."""
    for name, n in (("height", height), ("width", width)):
        if int(n) != n or n < 8 or n % 2:
            raise InvalidParameterError(f"{name} must be an even integer >= 8, got {n}")
    height, width = int(height), int(width)
    J = spec.num_scales
    sharp = spec.window_sharpness
    truncated = spec.boundary_mode is BoundaryMode.TRUNCATED

    xi0 = np.fft.fftfreq(height)[:, None]
    xi1 = np.fft.fftfreq(width)[None, :]
    radius = np.maximum(np.abs(xi0), np.abs(xi1))
    radius = np.broadcast_to(radius, (height, width))

    # rings: boundary b sits at radius 0.5 * 2**(b - J); finest ring runs to the corners
    r0 = 0.5 * 2.0**-J
    with np.errstate(divide="ignore"):
        log_r = np.log2(radius / r0)
    cum = [_step(log_r - b, sharp) for b in range(J)]
    low_sq = 1.0 - cum[0]
    ring_sq = [cum[j] - cum[j + 1] for j in range(J - 1)] + [cum[J - 1]]

    period = 8.0 if truncated else 4.0
    u = np.mod(_pseudo_angle(xi0, xi1), period)
    offset = float(_key_rng(spec.seed, 1).uniform(0.0, 1.0))

    filters = []
    index = []
    for j, n in enumerate(spec.shears_per_scale):
        half = (n - 1) // 2
        v = u / (period / n) - offset
        for kk in range(n):
            if n == 1:
                wedge = np.ones_like(u)
            else:
                d = np.mod(v - kk + n / 2.0, n) - n / 2.0
                wedge = _step(d + 0.5, sharp) - _step(d - 0.5, sharp)
            filters.append(np.clip(ring_sq[j] * wedge, 0.0, None))
            index.append((j, kk - half))
    squares = np.stack(filters + [np.clip(low_sq, 0.0, None)])

    if not truncated:
        squares = 0.5 * (squares + _mirror(squares))
    weight = squares.sum(axis=0)
    if np.any(weight <= 0):
        raise InvalidParameterError("filter bank does not cover the frequency plane")
    mags = np.sqrt(squares / weight)

    return ShearletSystem(
        height=height,
        width=width,
        spec=spec,
        band_filters=mags[:-1].astype(complex),
        band_index=tuple(index),
        lowpass=mags[-1].astype(complex),
        phase_mask=_phase_mask(spec, height, width),
    )


def frame_bounds(system: ShearletSystem) -> tuple[float, float]:
    """Lower and upper frame bounds, read off the weight grid."""
    w = system.weight_grid
    return float(w.min()), float(w.max())


def atom(system: ShearletSystem, j: int, k: int, t: Sequence[int] = (0, 0)) -> np.ndarray:
    """Spatial-domain analysis atom of band ``(j, k)`` centered at ``t``.

    ``shdec`` coefficients are inner products against these atoms:
    ``c[t] = sum(x * conj(atom(system, j, k, t)))``.
    """
    b = system.band(j, k)
    t0, t1 = (int(v) for v in t)
    if not (0 <= t0 < system.height and 0 <= t1 < system.width):
        raise InvalidParameterError(f"translation {t} outside the {system.shape} lattice")
    xi0 = np.fft.fftfreq(system.height)[:, None]
    xi1 = np.fft.fftfreq(system.width)[None, :]
    shift = np.exp(-2j * np.pi * (xi0 * t0 + xi1 * t1))
    spectrum = system.band_filters[b] * np.conj(system.phase_mask) * shift
    return np.fft.ifft2(spectrum)
