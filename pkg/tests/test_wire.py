import struct
import zlib

import numpy as np
import pytest

from shearguard.codec import CoefficientSet, relative_error, shdec, shrec
from shearguard.errors import EncodingError, FormatError, IntegrityError, LengthError, WireError
from shearguard.shearlet_core import build_system, derive_key
from shearguard.wire import (
    HEADER_SIZE,
    MIN_SIZE,
    decode_payload,
    encode_payload,
    payload_path,
    payload_size,
    read_payloads,
    write_payload,
)


def _random_set(rng, shape=(8, 8), shears=(3,), mode="truncated"):
    nb = sum(shears) + 1
    bands = rng.normal(size=(nb, *shape)) + 1j * rng.normal(size=(nb, *shape))
    fp = int(rng.integers(0, 2**63)) * 2 + int(rng.integers(0, 2))
    return CoefficientSet(bands, len(shears), shears, mode, fp)


def test_length_formula_example():
    sys_ = build_system(derive_key(1, 1, [3]), 32, 32)
    data = encode_payload(shdec(np.zeros((32, 32)), sys_), 1, 2, 3)
    # 4 magic + 33 header + 1 shear byte + 4 bands * 32*32 * 8 + 4 crc
    assert len(data) == 4 + 33 + 1 + 4 * 32 * 32 * 8 + 4 == 32810
    assert payload_size(32, 32, (3,)) == 32810
    assert MIN_SIZE == 41


def test_header_layout(rng):
    c = _random_set(rng, shears=(3, 5))
    data = encode_payload(c, label=513, owner_id=7, sequence=2**40 + 5)
    assert data[:4] == b"SHC1"
    version, flags, h, w, ns = struct.unpack_from("<BBIIB", data, 4)
    assert (version, flags, h, w, ns) == (1, 1, 8, 8, 2)
    label, owner, seq, fp = struct.unpack_from("<HIQQ", data, 15)
    assert (label, owner, seq, fp) == (513, 7, 2**40 + 5, c.key_fingerprint)
    assert tuple(data[HEADER_SIZE : HEADER_SIZE + 2]) == (3, 5)
    first = np.frombuffer(data, "<f4", count=2, offset=HEADER_SIZE + 2)
    assert first[0] == np.float32(c.bands[0, 0, 0].real)
    assert first[1] == np.float32(c.bands[0, 0, 0].imag)
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_roundtrip_bit_exact(rng):
    for _ in range(200):
        shears = tuple(int(v) for v in rng.choice([1, 3, 5], size=rng.integers(1, 3)))
        c = _random_set(rng, shape=(2 * int(rng.integers(4, 9)),) * 2, shears=shears,
                        mode=str(rng.choice(["symmetric", "truncated"])))
        label, owner, seq = (int(v) for v in rng.integers(0, [2**16, 2**32, 2**62]))
        data = encode_payload(c, label, owner, seq)
        p = decode_payload(data)
        assert (p.label, p.owner_id, p.sequence, p.key_fingerprint) == (label, owner, seq, c.key_fingerprint)
        assert p.boundary_mode == c.boundary_mode
        assert encode_payload(p.to_coefficient_set(), label, owner, seq) == data
        assert p.same_as(decode_payload(data))


def test_single_byte_flips_all_detected(rng):
    data = encode_payload(_random_set(rng, shape=(8, 8), shears=(1,)), 1, 2, 3)
    for pos in range(len(data)):
        for delta in (0x01, 0x80, 0xFF):
            corrupt = bytearray(data)
            corrupt[pos] ^= delta
            with pytest.raises(WireError):
                decode_payload(bytes(corrupt))


def test_error_classes(rng):
    data = encode_payload(_random_set(rng), 0, 0, 0)
    with pytest.raises(LengthError):
        decode_payload(data[:40])
    with pytest.raises(FormatError):
        decode_payload(b"XXXX" + data[4:])
    bad = bytearray(data)
    bad[100] ^= 1
    with pytest.raises(IntegrityError):
        decode_payload(bytes(bad))
    # consistent CRC but a truncated coefficient block
    body = data[:-20]
    with pytest.raises(LengthError):
        decode_payload(body + struct.pack("<I", zlib.crc32(body)))


def test_encode_rejects_bad_inputs(rng):
    c = _random_set(rng)
    with pytest.raises(EncodingError):
        encode_payload(c, 70000, 0, 0)
    bands = c.bands.copy()
    bands[0, 0, 0] = np.nan
    with pytest.raises(EncodingError):
        encode_payload(CoefficientSet(bands, 1, (3,), "truncated", 0), 0, 0, 0)
    bands[0, 0, 0] = 1e39  # overflows float32
    with pytest.raises(EncodingError):
        encode_payload(CoefficientSet(bands, 1, (3,), "truncated", 0), 0, 0, 0)


def test_float32_quantization_loss(trunc_system, rng):
    worst = 0.0
    for x in rng.random((20, 32, 32)):
        c = shdec(x, trunc_system)
        decoded = decode_payload(encode_payload(c, 0, 0, 0)).to_coefficient_set()
        ref = shrec(c, trunc_system)
        worst = max(worst, relative_error(shrec(decoded, trunc_system), ref))
    assert worst <= 1e-5


def test_directory_convention(tmp_path, rng):
    blobs = [encode_payload(_random_set(rng), 0, owner, seq) for owner, seq in [(2, 1), (1, 5), (1, 0)]]
    for b in blobs:
        write_payload(tmp_path, b)
    assert payload_path(tmp_path, 1, 5) == tmp_path / "1" / "5.shc"
    order = [(decode_payload(b).owner_id, decode_payload(b).sequence) for b in read_payloads(tmp_path)]
    assert order == [(1, 0), (1, 5), (2, 1)]
