import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from weqa.errors import ImageDecodeError, ManifestError, UnsupportedBitDepthError
from weqa.imgio import (DISTORTION_PARAMS, DISTORTIONS, ColorImage, DatasetManifest,
                        ManifestEntry, apply_distortion, encode_image, load_image,
                        parse_manifest, quantize8, read_manifest, save_image, write_manifest)

from conftest import rgb_image, smooth_image


def write_pgm(path, pixels, w, h):
    path.write_bytes(f"P5 {w} {h} 255\n".encode() + bytes(pixels))


def test_pgm_linear_scaling(tmp_path):
    p = tmp_path / "a.pgm"
    write_pgm(p, [0, 255, 128, 64], 2, 2)
    img = load_image(p)
    np.testing.assert_array_equal(img.y.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])
    assert np.all(img.cb == 0.5) and np.all(img.cr == 0.5)


def test_red_pixel_luma(tmp_path):
    p = tmp_path / "r.ppm"
    p.write_bytes(b"P6 1 1 255\n" + bytes([255, 0, 0]))
    img = load_image(p)
    assert abs(img.y[0, 0] - 0.299) < 1e-6


def test_truncated_file(tmp_path):
    good = tmp_path / "g.png"
    save_image(rgb_image(16, 16), good)
    bad = tmp_path / "bad.png"
    bad.write_bytes(good.read_bytes()[:40])
    with pytest.raises(ImageDecodeError):
        load_image(bad)


def test_missing_file(tmp_path):
    with pytest.raises(ImageDecodeError):
        load_image(tmp_path / "nope.png")


def test_sixteen_bit_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(p)
    with pytest.raises(UnsupportedBitDepthError):
        load_image(p)


def test_rgb_roundtrip_close():
    img = rgb_image(8, 8)
    back = ColorImage.from_rgb(img.to_rgb())
    np.testing.assert_allclose(back.y, img.y, atol=1e-12)


def test_planes_must_match():
    with pytest.raises(ValueError):
        ColorImage(np.zeros((4, 4)), np.zeros((4, 5)), np.zeros((4, 4)))


@pytest.mark.parametrize("fmt", ["png", "pgm", "ppm"])
def test_encode_decode_idempotent_after_first_pass(tmp_path, fmt):
    img = rgb_image(12, 10, seed=3)
    a = tmp_path / f"a.{fmt}"
    b = tmp_path / f"b.{fmt}"
    save_image(img, a)
    once = load_image(a)
    save_image(once, b)
    twice = load_image(b)
    assert once == twice
    assert a.read_bytes() == b.read_bytes()


@given(st.lists(st.integers(0, 255), min_size=16, max_size=16))
@settings(max_examples=50, deadline=None)
def test_gray_quantization_idempotent(vals):
    plane = np.array(vals, dtype=np.float64).reshape(4, 4) / 255.0
    np.testing.assert_array_equal(quantize8(quantize8(plane) / 255.0), quantize8(plane))


# --- distortions -------------------------------------------------------------

@pytest.mark.parametrize("kind", DISTORTIONS)
def test_distortion_deterministic_and_clamped(kind):
    img = smooth_image(32, 32)
    a = apply_distortion(img, kind, 3, seed=11)
    b = apply_distortion(img, kind, 3, seed=11)
    assert a == b
    for p in (a.y, a.cb, a.cr):
        assert p.min() >= 0.0 and p.max() <= 1.0


def test_noise_variance_level5():
    img = ColorImage.from_gray(np.full((128, 128), 0.5))
    out = apply_distortion(img, "gaussian_noise", 5, seed=2)
    sigma = DISTORTION_PARAMS["gaussian_noise"][4]
    assert sigma == 25 / 255
    assert abs(out.y.var() / sigma ** 2 - 1) < 0.2


def test_blur_impulse_sums_to_one():
    plane = np.zeros((41, 41))
    plane[20, 20] = 1.0
    out = apply_distortion(ColorImage.from_gray(plane), "gaussian_blur", 1, seed=0)
    assert abs(out.y.sum() - 1.0) < 1e-6
    assert out.y[20, 20] == out.y.max()
    np.testing.assert_allclose(out.y, out.y.T, atol=1e-15)


def test_noise_severity_monotone_over_seeds():
    img = smooth_image(64, 64, seed=1)
    means = np.zeros((8, 5))
    for s in range(8):
        for lv in range(1, 6):
            means[s, lv - 1] = np.abs(apply_distortion(img, "gaussian_noise", lv, s).y - img.y).mean()
    assert np.all(np.diff(means.mean(axis=0)) >= 0)


def test_contrast_shrinks_luma_spread():
    img = smooth_image(32, 32)
    out = apply_distortion(img, "contrast_change", 5, 0)
    assert out.y.std() < img.y.std()
    assert abs(out.y.mean() - img.y.mean()) < 1e-9


def test_salt_pepper_hits_extremes():
    img = ColorImage.from_gray(np.full((64, 64), 0.5))
    out = apply_distortion(img, "salt_pepper", 5, 1)
    changed = out.y != 0.5
    assert set(np.unique(out.y[changed])) <= {0.0, 1.0}
    assert 0.02 < changed.mean() < 0.08


def test_jpeg_blocking_constant_image_unchanged():
    img = ColorImage.from_gray(np.full((16, 16), 128 / 255))
    out = apply_distortion(img, "jpeg_blocking", 5, 0)
    np.testing.assert_allclose(out.y, img.y, atol=1e-12)


def test_jpeg_blocking_grows_with_level():
    img = smooth_image(32, 32, seed=5)
    errs = [np.abs(apply_distortion(img, "jpeg_blocking", lv, 0).y - img.y).mean() for lv in (1, 5)]
    assert 0 < errs[0] < errs[1]


@pytest.mark.parametrize("kind,level", [("speckle", 1), ("gaussian_noise", 0), ("gaussian_noise", 6)])
def test_distortion_rejects_bad_args(kind, level):
    with pytest.raises(ValueError):
        apply_distortion(rgb_image(8, 8), kind, level, 0)


# --- manifests ---------------------------------------------------------------

def test_empty_manifest_header_only(tmp_path):
    p = tmp_path / "m.csv"
    write_manifest(DatasetManifest([]), p)
    assert p.read_text() == "ref_path,dist_path,distortion_type,level,mos\n"


def test_optional_mos_absent():
    m = parse_manifest("ref_path,dist_path,distortion_type,level,mos\n"
                       "ref/a.png,dist/a_n3.png,gaussian_noise,3,\n")
    assert m.entries == [ManifestEntry("ref/a.png", "dist/a_n3.png", "gaussian_noise", 3, None)]


def test_bad_enum_names_row():
    text = ("ref_path,dist_path,distortion_type,level,mos\n"
            "r.png,d1.png,gaussian_noise,1,\n"
            "r.png,d2.png,speckle,2,\n")
    with pytest.raises(ManifestError) as exc:
        parse_manifest(text)
    assert exc.value.row == 2
    assert "row 2" in str(exc.value)


@pytest.mark.parametrize("text,row", [
    ("", None),
    ("a,b,c\n", None),
    ("ref_path,dist_path,distortion_type,level,mos\nr,d,gaussian_blur,0,\n", 1),
    ("ref_path,dist_path,distortion_type,level,mos\nr,d,gaussian_blur,x,\n", 1),
    ("ref_path,dist_path,distortion_type,level,mos\nr,d,gaussian_blur,1,\nq,d,gaussian_blur,2,\n", 2),
])
def test_manifest_errors(text, row):
    with pytest.raises(ManifestError) as exc:
        parse_manifest(text)
    assert exc.value.row == row


def test_dangling_path(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ref_path,dist_path,distortion_type,level,mos\nr.png,d.png,gaussian_blur,1,\n")
    with pytest.raises(ManifestError) as exc:
        read_manifest(p)
    assert exc.value.row == 1
    assert len(read_manifest(p, check_files=False)) == 1


_path = st.text(alphabet="abcxyz019_/.-", min_size=1, max_size=12).filter(lambda s: s.strip() == s)
_entry = st.builds(
    ManifestEntry, _path, _path, st.sampled_from(DISTORTIONS), st.integers(1, 10**6),
    st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False)))


@given(st.lists(_entry, max_size=20, unique_by=lambda e: e.dist_path))
@settings(max_examples=60, deadline=None)
def test_manifest_roundtrip(tmp_path_factory, entries):
    p = tmp_path_factory.mktemp("m") / "m.csv"
    m = DatasetManifest(entries)
    write_manifest(m, p)
    assert read_manifest(p, check_files=False) == m


def test_encode_plane_as_ppm_refused():
    with pytest.raises(ValueError):
        encode_image(np.zeros((2, 2)), "ppm")
