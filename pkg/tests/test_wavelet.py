import dataclasses
import math

import numpy as np
import pytest

from weqa.errors import DimensionMismatchError, LevelsError
from weqa.wavelet import (dc_gain, default_levels, dwt1, dwt2, idwt2, wave_vector_at,
                          wave_vectors)


def test_haar_pair():
    a, d = dwt1([4.0, 2.0])
    assert a[0] == pytest.approx(3 * math.sqrt(2), abs=1e-12)
    assert d[0] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_constant_image_details_vanish():
    pyr = dwt2(np.full((16, 16), 0.3), 3)
    for trio in pyr.details:
        for band in trio:
            assert np.all(np.abs(band) < 1e-14)
    np.testing.assert_allclose(pyr.approx, 0.3 * dc_gain("haar", 3), rtol=1e-12)


def test_perfect_reconstruction_random(rng):
    x = rng.normal(size=(32, 32))
    assert np.abs(idwt2(dwt2(x, 3)) - x).max() < 1e-8


@pytest.mark.parametrize("filt", ["haar", "db2"])
@pytest.mark.parametrize("shape", [(8, 8), (16, 16), (32, 32), (33, 33), (33, 20), (64, 64)])
def test_reconstruction_sizes(rng, filt, shape):
    x = rng.uniform(size=shape)
    L = min(3, int(math.log2(min(shape))))
    err = np.abs(idwt2(dwt2(x, L, filt)) - x).max()
    assert err < (1e-8 if filt == "haar" and shape[0] % 2 == 0 else 1e-6)


def test_zero_pyramid_gives_zero_plane():
    pyr = dwt2(np.zeros((16, 12)), 2)
    assert np.all(idwt2(pyr) == 0)


def test_approx_only_synthesis():
    L, c = 2, 3.0
    pyr = dwt2(np.zeros((8, 8)), L)
    pyr = dataclasses.replace(pyr, approx=np.full_like(pyr.approx, c))
    # Haar synthesis spreads c over 2^L x 2^L pixels with gain 1/2 per level
    np.testing.assert_allclose(idwt2(pyr), c / 2 ** L, atol=1e-12)


def test_impulse_roundtrip():
    x = np.zeros((16, 16))
    x[5, 9] = 1.0
    for filt in ("haar", "db2"):
        assert np.abs(idwt2(dwt2(x, 3, filt)) - x).max() < 1e-8


@pytest.mark.parametrize("shape", [(8, 8), (32, 64), (64, 64)])
def test_parseval_haar(rng, shape):
    x = rng.normal(size=shape)
    pyr = dwt2(x, 3)
    energy = sum(float((b ** 2).sum()) for b in pyr.coefficients())
    assert abs(energy / float((x ** 2).sum()) - 1) < 1e-6


def test_subband_sizes_halve_with_ceiling():
    pyr = dwt2(np.zeros((33, 20)), 3, "db2")
    assert [t[0].shape for t in pyr.details] == [(17, 10), (9, 5), (5, 3)]
    assert pyr.approx.shape == (5, 3)


def test_too_many_levels():
    with pytest.raises(LevelsError):
        dwt2(np.zeros((16, 16)), 5)
    with pytest.raises(LevelsError):
        dwt2(np.zeros((16, 16)), 0)


def test_unknown_filter():
    with pytest.raises(ValueError):
        dwt2(np.zeros((8, 8)), 1, "sym8")


def test_idwt_dimension_mismatch():
    pyr = dwt2(np.zeros((16, 16)), 2)
    bad = dataclasses.replace(pyr, approx=np.zeros((3, 3)))
    with pytest.raises(DimensionMismatchError):
        idwt2(bad)


def test_horizontal_stripes_land_in_h():
    rows = (np.arange(64) // 2) % 2
    x = np.repeat(rows[:, None], 64, axis=1).astype(float)
    pyr = dwt2(x, 3)
    e = np.zeros(3)
    for trio in pyr.details:
        for k, band in enumerate(trio):
            e[k] += (band ** 2).sum()
    assert e[0] / e.sum() > 0.9


def test_default_levels():
    assert default_levels((64, 300)) == 4
    assert default_levels((512, 512)) == 4
    assert default_levels((32, 32)) == 4
    assert default_levels((16, 40)) == 3
    assert default_levels((4, 4)) == 1


# --- wave-vectors --------------------------------------------------------------

def test_wave_vector_small_hand_case():
    x = np.zeros((4, 4))
    x[:2, :2] = [[1.0, 2.0], [3.0, 5.0]]
    pyr = dwt2(x, 1)
    # 2x2 Haar block responses: H = (top - bottom)/2, V = (left - right)/2,
    # D = (a - b - c + d)/2, A = (a + b + c + d)/2
    np.testing.assert_allclose(wave_vector_at(pyr, (0, 0)), [-2.5, -1.5, 0.5, 5.5], atol=1e-12)
    np.testing.assert_allclose(wave_vector_at(pyr, (1, 1)), [-2.5, -1.5, 0.5, 5.5], atol=1e-12)
    np.testing.assert_allclose(wave_vector_at(pyr, (3, 3)), [0, 0, 0, 0], atol=1e-12)


def test_constant_wave_vector():
    c = 0.7
    pyr = dwt2(np.full((32, 32), c), 3)
    v = wave_vector_at(pyr, (5, 17))
    assert v.shape == (10,)
    np.testing.assert_allclose(v[:-1], 0, atol=1e-14)
    assert v[-1] == pytest.approx(c * dc_gain("haar", 3), rel=1e-12)
    assert dc_gain("haar", 3) == pytest.approx(8.0)


def test_same_dyadic_block_shares_coarse_components(rng):
    L = 3
    pyr = dwt2(rng.uniform(size=(32, 32)), L)
    a = wave_vector_at(pyr, (8, 16))
    b = wave_vector_at(pyr, (15, 23))
    np.testing.assert_array_equal(a[-4:], b[-4:])


def test_wave_vectors_match_direct_indexing(rng):
    L = 3
    shape = (33, 40)
    pyr = dwt2(rng.normal(size=shape), L, "db2")
    field = wave_vectors(pyr)
    assert field.shape == shape + (3 * L + 1,)
    for _ in range(1000):
        r, c = int(rng.integers(shape[0])), int(rng.integers(shape[1]))
        direct = []
        for j, trio in enumerate(pyr.details, start=1):
            direct += [band[r >> j, c >> j] for band in trio]
        direct.append(pyr.approx[r >> L, c >> L])
        np.testing.assert_array_equal(wave_vector_at(pyr, (r, c)), direct)
        np.testing.assert_array_equal(field[r, c], direct)


@pytest.mark.parametrize("p", [(-1, 0), (0, 32), (32, 0)])
def test_wave_vector_out_of_bounds(p):
    pyr = dwt2(np.zeros((32, 32)), 2)
    with pytest.raises(IndexError):
        wave_vector_at(pyr, p)
