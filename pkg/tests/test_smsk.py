"""Binary soft-mask container: layout, roundtrips, rejection of bad files."""

import struct

import numpy as np
import pytest

from maskrefine import (
    SmskFormatError,
    SoftMask,
    read_smsk,
    read_soft_mask,
    write_smsk,
    write_soft_mask,
)
from maskrefine.rng import SplitMix64


def test_golden_header_bytes(tmp_path):
    path = tmp_path / "m.smsk"
    write_smsk(path, 2, 1, [0.0, 1.0])
    blob = path.read_bytes()
    assert blob[:13] == struct.pack("<4sBII", b"SMSK", 1, 2, 1)
    assert blob[13:] == np.array([0.0, 1.0], dtype="<f4").tobytes()
    assert len(blob) == 13 + 4 * 2


def test_roundtrip_preserves_f32_values(tmp_path):
    rng = SplitMix64(51)
    path = tmp_path / "m.smsk"
    for _ in range(10):
        w = rng.randint(1, 9)
        h = rng.randint(1, 9)
        values = rng.uniform(w * h)
        write_smsk(path, w, h, values)
        rw, rh, got = read_smsk(path)
        assert (rw, rh) == (w, h)
        # storage is float32, so roundtrip equals the f32 cast exactly
        assert np.array_equal(got, values.astype(np.float32).astype(np.float64))


def test_soft_mask_roundtrip(tmp_path):
    path = tmp_path / "m.smsk"
    probs = np.array([0.0, 0.25, 0.5, 1.0])
    write_soft_mask(path, SoftMask(2, 2, probs))
    mask = read_soft_mask(path)
    assert (mask.width, mask.height) == (2, 2)
    assert np.array_equal(mask.probs, probs)


def test_write_rejects_bad_shapes_and_values(tmp_path):
    path = tmp_path / "m.smsk"
    with pytest.raises(ValueError):
        write_smsk(path, 2, 2, [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        write_smsk(path, 0, 1, [])
    with pytest.raises(ValueError):
        write_smsk(path, 1, 1, [float("nan")])


def test_read_rejects_corrupt_files(tmp_path):
    good = struct.pack("<4sBII", b"SMSK", 1, 1, 1) + struct.pack("<f", 0.5)

    bad_magic = tmp_path / "magic.smsk"
    bad_magic.write_bytes(b"XMSK" + good[4:])
    with pytest.raises(SmskFormatError, match="magic"):
        read_smsk(bad_magic)

    bad_version = tmp_path / "version.smsk"
    bad_version.write_bytes(good[:4] + b"\x02" + good[5:])
    with pytest.raises(SmskFormatError, match="version"):
        read_smsk(bad_version)

    truncated = tmp_path / "short.smsk"
    truncated.write_bytes(good[:8])
    with pytest.raises(SmskFormatError, match="truncated"):
        read_smsk(truncated)

    short_payload = tmp_path / "payload.smsk"
    short_payload.write_bytes(struct.pack("<4sBII", b"SMSK", 1, 2, 2) + good[13:])
    with pytest.raises(SmskFormatError, match="expected"):
        read_smsk(short_payload)

    zero_dim = tmp_path / "dims.smsk"
    zero_dim.write_bytes(struct.pack("<4sBII", b"SMSK", 1, 0, 1))
    with pytest.raises(SmskFormatError, match="dimensions"):
        read_smsk(zero_dim)


def test_read_soft_mask_enforces_unit_range(tmp_path):
    path = tmp_path / "w.smsk"
    write_smsk(path, 2, 1, [0.5, 1.5])
    # raw reader accepts any finite values, the soft-mask reader does not
    _, _, values = read_smsk(path)
    assert values[1] == np.float32(1.5)
    with pytest.raises(SmskFormatError, match="outside"):
        read_soft_mask(path)
