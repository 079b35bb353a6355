import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearguard.errors import InvalidParameterError
from shearguard.shearlet_core import (
    BoundaryMode,
    atom,
    build_system,
    derive_key,
    dilate,
    fnv1a_64,
    frame_bounds,
    hermitian_violation,
    read_key_file,
    scaling_matrix,
    shear_matrix,
    translate,
    write_key_file,
)


def test_scaling_matrix_values():
    np.testing.assert_array_equal(scaling_matrix(4), [[4, 0], [0, 2]])
    np.testing.assert_array_equal(scaling_matrix(1), np.eye(2))
    np.testing.assert_array_equal(scaling_matrix(-4), [[-4, 0], [0, 2]])
    with pytest.raises(InvalidParameterError):
        scaling_matrix(0)


def test_shear_matrix_values():
    np.testing.assert_array_equal(shear_matrix(0), np.eye(2))
    np.testing.assert_array_equal(shear_matrix(1), [[1, 1], [0, 1]])


@given(st.floats(-1e3, 1e3))
def test_shear_inverse_and_unit_determinant(s):
    np.testing.assert_allclose(shear_matrix(s) @ shear_matrix(-s), np.eye(2), atol=1e-12)
    assert np.linalg.det(shear_matrix(s)) == pytest.approx(1.0)


@pytest.mark.parametrize("a", [1, -1, 2, -2, 4, -4, 0.5])
def test_prefactor_matches_three_quarter_power(a):
    det = abs(np.linalg.det(scaling_matrix(a)))
    assert det**-0.5 == pytest.approx(abs(a) ** -0.75, rel=1e-12)


def _gaussian(shape, sigma=5.0, center=(0.0, 0.0)):
    r = np.arange(shape[0]) - (shape[0] - 1) / 2 - center[0]
    c = np.arange(shape[1]) - (shape[1] - 1) / 2 - center[1]
    return np.exp(-(r[:, None] ** 2 + c[None, :] ** 2) / (2 * sigma**2))


def test_dilate_identity_is_exact():
    f = _gaussian((32, 32))
    np.testing.assert_allclose(dilate(f, np.eye(2)), f, atol=1e-14)


def test_dilate_amplitude_prefactor():
    f = np.ones((33, 33))
    out = dilate(f, scaling_matrix(2))
    # center pixel lies at the origin, so f(B^-1 x) = 1 there
    assert out[16, 16] == pytest.approx(2 ** -0.75, rel=1e-12)
    assert out[16, 16] == pytest.approx(0.5946, abs=1e-4)


def test_dilate_matches_analytic_function():
    # dilating a sampled gaussian equals sampling the dilated gaussian
    B = scaling_matrix(2) @ shear_matrix(0.5)
    f = _gaussian((64, 64), sigma=4.0)
    pts = np.stack(np.meshgrid(np.arange(64) - 31.5, np.arange(64) - 31.5, indexing="ij"))
    pre = np.einsum("ij,jab->iab", np.linalg.inv(B), pts)
    exact = abs(np.linalg.det(B)) ** -0.5 * np.exp(-(pre[0] ** 2 + pre[1] ** 2) / 32.0)
    np.testing.assert_allclose(dilate(f, B), exact, atol=1e-2)


def test_dilate_roundtrip_interior():
    B = scaling_matrix(2)
    f = _gaussian((64, 64), sigma=6.0)
    back = dilate(dilate(f, B), np.linalg.inv(B))
    inner = (slice(16, 48), slice(16, 48))
    assert np.max(np.abs(back[inner] - f[inner])) <= 1e-2


def test_dilate_rejects_singular():
    with pytest.raises(InvalidParameterError):
        dilate(np.ones((8, 8)), np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_translate_identity_and_delta(rng):
    f = rng.random((16, 16))
    np.testing.assert_array_equal(translate(f, (0, 0)), f)
    delta = np.zeros((16, 16))
    delta[3, 5] = 1.0
    moved = translate(delta, (2, -4))
    assert np.argwhere(moved).tolist() == [[5, 1]]


@given(
    st.tuples(st.integers(-20, 20), st.integers(-20, 20)),
    st.tuples(st.integers(-20, 20), st.integers(-20, 20)),
)
@settings(max_examples=30)
def test_translate_group_law(t1, t2):
    f = np.arange(12 * 10, dtype=float).reshape(12, 10)
    lhs = translate(translate(f, t1), t2)
    rhs = translate(f, (t1[0] + t2[0], t1[1] + t2[1]))
    np.testing.assert_array_equal(lhs, rhs)


def test_translate_fractional_interpolates(rng):
    f = rng.random((8, 8))
    half = translate(f, (0.5, 0))
    np.testing.assert_allclose(half, 0.5 * (f + np.roll(f, 1, axis=0)), atol=1e-12)


def test_fnv1a_reference_vectors():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


def test_derive_key_deterministic_and_seed_sensitive():
    a = derive_key(7, 2, [3, 5], "truncated", True)
    b = derive_key(7, 2, [3, 5], "truncated", True)
    assert a == b and a.fingerprint == b.fingerprint
    assert derive_key(0, 2, [3, 5]).fingerprint != derive_key(1, 2, [3, 5]).fingerprint
    assert 1.0 <= a.window_sharpness <= 4.0


@pytest.mark.parametrize(
    "scales,shears", [(0, []), (2, [3]), (1, [2]), (1, [0]), (1, [-1])]
)
def test_derive_key_rejects_bad_layouts(scales, shears):
    with pytest.raises(InvalidParameterError):
        derive_key(1, scales, shears)


def test_key_file_roundtrip(tmp_path):
    spec = derive_key(2**64 - 1, 3, [1, 3, 5], "symmetric", False)
    path = tmp_path / "key.txt"
    write_key_file(spec, path)
    text = path.read_text()
    assert f'fingerprint = "{spec.fingerprint:016x}"' in text
    assert read_key_file(path) == spec


def test_key_file_detects_tampering(tmp_path):
    path = tmp_path / "key.txt"
    write_key_file(derive_key(5, 1, [3]), path)
    path.write_text(path.read_text().replace("seed = 5", "seed = 6"))
    with pytest.raises(InvalidParameterError):
        read_key_file(path)


def test_single_scale_system_layout():
    sys_ = build_system(derive_key(3, 1, [3]), 32, 32)
    assert sys_.band_filters.shape == (3, 32, 32)
    assert sys_.num_bands == 4
    assert sys_.band_index == ((0, -1), (0, 0), (0, 1))
    assert np.max(np.abs(sys_.weight_grid - 1)) <= 1e-6


@pytest.mark.parametrize("mode", list(BoundaryMode))
@pytest.mark.parametrize("shape", [(8, 8), (32, 48), (64, 64)])
def test_tight_frame(mode, shape):
    sys_ = build_system(derive_key(99, 3, [1, 3, 7], mode), *shape)
    lo, hi = frame_bounds(sys_)
    assert 1 - 1e-6 <= lo <= hi <= 1 + 1e-6


def test_phase_mask_unit_modulus(system):
    assert np.max(np.abs(np.abs(system.phase_mask) - 1)) <= 1e-12
    np.testing.assert_allclose(np.conj(system.phase_mask) * system.phase_mask, 1.0, atol=1e-12)


def test_mask_disabled_gives_ones():
    sys_ = build_system(derive_key(3, 1, [3], mask_enabled=False), 16, 16)
    np.testing.assert_array_equal(sys_.phase_mask, np.ones((16, 16)))


def test_mode_dichotomy(sym_system, trunc_system):
    assert all(hermitian_violation(f) <= 1e-12 for f in sym_system.band_filters)
    assert hermitian_violation(sym_system.lowpass) <= 1e-12
    assert hermitian_violation(sym_system.phase_mask) <= 1e-12
    assert max(hermitian_violation(f) for f in trunc_system.band_filters) >= 0.1


def test_build_is_deterministic():
    spec = derive_key(42, 2, [3, 5], "truncated")
    a, b = build_system(spec, 32, 32), build_system(spec, 32, 32)
    assert a.band_filters.tobytes() == b.band_filters.tobytes()
    assert a.phase_mask.tobytes() == b.phase_mask.tobytes()
    assert a.fingerprint == b.fingerprint == spec.fingerprint


@pytest.mark.parametrize("shape", [(7, 8), (8, 6), (9, 9), (32, 33)])
def test_build_rejects_bad_sizes(shape):
    with pytest.raises(InvalidParameterError):
        build_system(derive_key(1, 1, [3]), *shape)


def test_system_is_read_only(sym_system):
    with pytest.raises(ValueError):
        sym_system.band_filters[0, 0, 0] = 0


def test_frame_bounds_drop_when_band_removed(sym_system):
    filters = sym_system.band_filters.copy()
    filters[0] = 0
    damaged = replace(sym_system, band_filters=filters)
    lo, hi = frame_bounds(damaged)
    assert lo < 1 - 1e-3
    assert hi >= lo


def test_atom_energy_matches_frequency_sum(system):
    for j, k in system.band_index:
        b = system.band(j, k)
        oracle = sum(abs(v) ** 2 for v in system.band_filters[b].ravel()) / (32 * 32)
        energy = np.sum(np.abs(atom(system, j, k)) ** 2)
        assert energy == pytest.approx(oracle, rel=1e-10)


def test_atoms_are_circular_shifts(system):
    base = atom(system, 1, 2)
    for t in [(0, 1), (5, 3), (31, 17)]:
        shifted = atom(system, 1, 2, t)
        np.testing.assert_allclose(shifted, np.roll(base, t, axis=(0, 1)), atol=1e-12)
        assert np.linalg.norm(shifted) == pytest.approx(np.linalg.norm(base), rel=1e-12)


def test_atom_rejects_unknown_band(sym_system):
    with pytest.raises(InvalidParameterError):
        atom(sym_system, 5, 0)
    with pytest.raises(InvalidParameterError):
        atom(sym_system, 0, 2)  # scale 0 has shears -1..1


def test_atom_orientation_is_anisotropic(sym_system):
    # directional atoms at the finest scale concentrate energy along one axis pair
    j = 1
    spreads = []
    for _, k in [b for b in sym_system.band_index if b[0] == j]:
        a = np.abs(np.fft.fftshift(atom(sym_system, j, k))) ** 2
        rows, cols = np.mgrid[:32, :32] - 16
        cov = np.cov(np.stack([rows.ravel(), cols.ravel()]), aweights=a.ravel())
        ev = np.linalg.eigvalsh(cov)
        spreads.append(ev[1] / ev[0])
    assert max(spreads) > 1.5
    assert not math.isnan(sum(spreads))
