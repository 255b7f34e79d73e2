import numpy as np
import pytest

from weqa.errors import ModelFormatError
from weqa.imgio import load_image
from weqa.maps import RAW_MAGIC, normalize_for_display, read_raw_map, write_map, write_raw_map


def test_raw_roundtrip(tmp_path, rng):
    m = rng.exponential(size=(13, 7)).astype(np.float32).astype(np.float64)
    p = tmp_path / "m.raw"
    write_raw_map(m, p)
    data = p.read_bytes()
    assert data[:8] == RAW_MAGIC and len(data) == 16 + 4 * 13 * 7
    assert int.from_bytes(data[8:12], "little") == 7
    np.testing.assert_array_equal(read_raw_map(p), m)


def test_raw_rejects_damage(tmp_path):
    p = tmp_path / "m.raw"
    write_raw_map(np.zeros((2, 2)), p)
    good = p.read_bytes()
    for bad in (b"NOTAMAP1" + good[8:], good[:-1], good[:5]):
        p.write_bytes(bad)
        with pytest.raises(ModelFormatError):
            read_raw_map(p)


def test_display_normalisation():
    plane, lo, hi = normalize_for_display(np.array([[1.0, 3.0], [2.0, 5.0]]))
    assert (lo, hi) == (1.0, 5.0)
    assert plane.min() == 0 and plane.max() == 1
    flat, lo, hi = normalize_for_display(np.full((3, 3), 2.0))
    assert np.all(flat == 0) and lo == hi == 2.0


def test_png_export_spans_full_range(tmp_path, rng):
    m = rng.uniform(0.2, 0.7, size=(16, 16))
    info = write_map(m, tmp_path / "m.png")
    assert info == {"min": m.min(), "max": m.max()}
    img = load_image(tmp_path / "m.png")
    assert img.y.min() == 0.0 and img.y.max() == 1.0


def test_raw_dispatch(tmp_path):
    info = write_map(np.array([[0.5, 1.5]]), tmp_path / "m.bin")
    assert info == {"min": 0.5, "max": 1.5}
    np.testing.assert_array_equal(read_raw_map(tmp_path / "m.bin"), [[0.5, 1.5]])
