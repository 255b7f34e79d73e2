import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from weqa.errors import DimensionMismatchError
from weqa.fr import coupling_matrix, fr_assess, pool, ssim_assess, weqa_assess, weqa_distance
from weqa.imgio import ColorImage, apply_distortion

from conftest import rgb_image, smooth_image


def brute_d2(a, b, g):
    d = np.asarray(a) - np.asarray(b)
    return sum(g[i, j] * d[i] * d[j] for i in range(len(d)) for j in range(len(d)))


def test_coupling_small_orders():
    assert coupling_matrix(1).g.tolist() == [[1.0]]
    g2 = coupling_matrix(2).g
    assert g2[0, 1] == pytest.approx(0.606531, abs=1e-6)
    assert g2[0, 1] == math.exp(-0.5)
    assert coupling_matrix(3).g[0, 2] == pytest.approx(0.135335, abs=1e-6)


@pytest.mark.parametrize("M", [1, 4, 13, 31, 64])
def test_coupling_properties(M):
    g = coupling_matrix(M).g
    assert np.array_equal(g, g.T)
    assert np.all(np.diag(g) == 1.0)
    assert np.all((g >= 0) & (g <= 1))
    i, j = np.indices(g.shape)
    # exp(-(i-j)^2/2) underflows to 0.0 in double precision beyond |i-j| = 38
    assert np.all(g[np.abs(i - j) <= 38] > 0)
    np.testing.assert_array_equal(g, np.exp(-((i - j) ** 2) / 2.0))
    assert np.linalg.eigvalsh(g).min() > 0


def test_coupling_is_cached():
    assert coupling_matrix(7) is coupling_matrix(7)


@pytest.mark.parametrize("M", [0, 65])
def test_coupling_range(M):
    with pytest.raises(ValueError):
        coupling_matrix(M)


def test_distance_examples():
    g = coupling_matrix(2)
    assert weqa_distance([0.3, 0.1], [0.3, 0.1], g) == 0
    assert weqa_distance([1, 0], [0, 0], g) == pytest.approx(1.0, abs=1e-15)
    d = weqa_distance([1, 0], [0, 1], g)
    assert d ** 2 == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-12)
    assert d ** 2 == pytest.approx(0.786939, abs=1e-6)
    assert d ** 2 < 2


def test_distance_length_mismatch():
    with pytest.raises(ValueError):
        weqa_distance([1, 2, 3], [1, 2, 3], coupling_matrix(2))


@given(hnp.arrays(np.float64, st.integers(1, 13), elements=st.floats(-10, 10)),
       st.data())
@settings(max_examples=100, deadline=None)
def test_quadratic_form_oracle(a, data):
    b = data.draw(hnp.arrays(np.float64, a.shape, elements=st.floats(-10, 10)))
    g = coupling_matrix(a.size)
    d = weqa_distance(a, b, g)
    assert d >= 0
    assert abs(d * d - brute_d2(a, b, g.g)) <= 1e-10 * max(1.0, brute_d2(a, b, g.g))
    assert d == weqa_distance(b, a, g)


def test_triangle_inequality(rng):
    g = coupling_matrix(7)
    x, y, z = rng.normal(size=(3, 2000, 7))
    assert np.all(weqa_distance(x, z, g) <= weqa_distance(x, y, g) + weqa_distance(y, z, g) + 1e-9)


# --- WEQA on images ------------------------------------------------------------

def test_identity_gives_zero_map():
    img = rgb_image(32, 32)
    res = weqa_assess(img, img, 3)
    assert np.all(res.map == 0)
    assert res.mean_distortion == 0 and res.o_score == 1.0


def test_impulse_is_local():
    L = 3
    ref = ColorImage.from_gray(np.full((32, 32), 0.5))
    y = ref.y.copy()
    y[13, 21] += 0.3
    res = weqa_assess(ref, ColorImage.from_gray(y), L)
    touched = np.zeros_like(res.map, dtype=bool)
    touched[8:16, 16:24] = True  # the 2^L block holding the impulse
    assert np.all(res.map[~touched] == 0)
    assert np.all(res.map[touched] > 0)
    assert res.map[13, 21] == res.map.max()


def test_region_locality(rng):
    L = 2
    ref = smooth_image(32, 32, seed=4)
    y = ref.y.copy()
    y[9:14, 18:30] = rng.uniform(size=(5, 12))
    res = weqa_assess(ref, ColorImage(y, ref.cb, ref.cr), L)
    B = 2 ** L
    rows = np.arange(32) // B
    cols = np.arange(32) // B
    hit_r = np.isin(rows, np.unique(np.arange(9, 14) // B))
    hit_c = np.isin(cols, np.unique(np.arange(18, 30) // B))
    outside = ~(hit_r[:, None] & hit_c[None, :])
    assert np.all(res.map[outside] == 0)


def test_chroma_ignored_by_weqa():
    ref = rgb_image(16, 16)
    dist = ColorImage(ref.y, np.full_like(ref.cb, 0.2), ref.cr)
    assert weqa_assess(ref, dist, 2).o_score == 1.0


def test_nested_noise_monotone(rng):
    ref = smooth_image(64, 64, seed=2)
    n = rng.normal(size=ref.shape)
    qs = []
    for s in (0.005, 0.01, 0.02, 0.04):
        dist = ColorImage(ref.y + s * n, ref.cb, ref.cr)
        qs.append(weqa_assess(ref, dist, 4).o_score)
    assert all(0 < q <= 1 for q in qs)
    assert all(a > b for a, b in zip(qs, qs[1:]))


def test_noise_ladder_strictly_increasing():
    ref = smooth_image(64, 64, seed=6)
    dbar = [weqa_assess(ref, apply_distortion(ref, "gaussian_noise", lv, 9), 4).mean_distortion
            for lv in range(1, 6)]
    assert all(a < b for a, b in zip(dbar, dbar[1:]))


def test_pool():
    assert pool(np.zeros((3, 3))) == (0.0, 1.0)
    assert pool(np.full((2, 2), 3.0)) == (3.0, 0.25)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        weqa_assess(rgb_image(16, 16), rgb_image(16, 24), 2)
    with pytest.raises(DimensionMismatchError):
        ssim_assess(rgb_image(16, 16), rgb_image(16, 24))


def test_fr_assess_default_levels():
    img = rgb_image(16, 16)
    assert fr_assess(img, img).o_score == 1.0


# --- SSIM -----------------------------------------------------------------------

def test_ssim_identity():
    img = rgb_image(24, 24)
    res = ssim_assess(img, img)
    assert np.abs(res.ssim_map - 1).max() < 1e-12
    assert res.mean_ssim == pytest.approx(1.0, abs=1e-12)


def test_ssim_equal_constants():
    c = ColorImage.from_gray(np.full((16, 16), 0.3))
    assert ssim_assess(c, c).mean_ssim == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_pair():
    a = ColorImage.from_gray(np.full((16, 16), 0.5))
    b = ColorImage.from_gray(np.full((16, 16), 0.25))
    c1 = 0.01 ** 2
    expected = (2 * 0.5 * 0.25 + c1) / (0.5 ** 2 + 0.25 ** 2 + c1)
    res = ssim_assess(a, b)
    np.testing.assert_allclose(res.ssim_map, expected, rtol=1e-10)
    assert expected == pytest.approx(0.800064, abs=1e-6)


def test_ssim_bounds_and_distortion_map(rng):
    a = rgb_image(32, 32, seed=1)
    b = rgb_image(32, 32, seed=2)
    res = ssim_assess(a, b)
    assert -1 <= res.mean_ssim <= 1
    np.testing.assert_array_equal(res.distortion_map, 1 - res.ssim_map)
