"""Image decoding/encoding, BT.601 colour conversion, synthetic distortions
and dataset manifests.

An image plane is a plain 2-D ``float64`` array of shape ``(height, width)``
with samples in ``[0, 1]``. A :class:`ColorImage` bundles the three YCbCr
planes; chroma planes are centred on 0.5.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image
from scipy import fft as sfft
from scipy import ndimage

from .errors import ImageDecodeError, ManifestError, UnsupportedBitDepthError

# BT.601 luma weights
KR, KG, KB = 0.299, 0.587, 0.114

DISTORTIONS = (
    "gaussian_noise",
    "gaussian_blur",
    "jpeg_blocking",
    "contrast_change",
    "salt_pepper",
)

# Severity tables, level 1..5. Changing any value changes every corpus built
# from it, so bump DISTORTION_TABLE_VERSION alongside.
DISTORTION_TABLE_VERSION = 1
DISTORTION_PARAMS = {
    "gaussian_noise": tuple(s / 255.0 for s in (2, 5, 10, 15, 25)),
    "gaussian_blur": (0.8, 1.2, 1.8, 2.6, 3.6),
    "jpeg_blocking": (1, 2, 4, 8, 16),
    "contrast_change": (0.9, 0.75, 0.6, 0.45, 0.3),
    "salt_pepper": (0.002, 0.005, 0.01, 0.02, 0.05),
}

# ITU-T T.81 Annex K example quantisation tables (quality 50).
_JPEG_LUMA_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)
_JPEG_CHROMA_Q = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ColorImage:
    """Three equally sized YCbCr planes (full-range BT.601, chroma centred on 0.5)."""

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray

    def __post_init__(self):
        for name in ("y", "cb", "cr"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"plane {name!r} must be 2-D, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if not (self.y.shape == self.cb.shape == self.cr.shape):
            raise ValueError("Y, Cb and Cr planes must share dimensions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.y.shape

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @classmethod
    def from_gray(cls, plane) -> "ColorImage":
        plane = np.asarray(plane, dtype=np.float64)
        half = np.full_like(plane, 0.5)
        return cls(plane, half, half.copy())

    @classmethod
    def from_rgb(cls, rgb) -> "ColorImage":
        """Build from an ``(h, w, 3)`` array of RGB samples in [0, 1]."""
        rgb = np.asarray(rgb, dtype=np.float64)
        r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
        y = KR * r + KG * g + KB * b
        cb = 0.5 + (b - y) / (2.0 * (1.0 - KB))
        cr = 0.5 + (r - y) / (2.0 * (1.0 - KR))
        return cls(y, cb, cr)

    def to_rgb(self) -> np.ndarray:
        y, cb, cr = self.y, self.cb - 0.5, self.cr - 0.5
        r = y + 2.0 * (1.0 - KR) * cr
        b = y + 2.0 * (1.0 - KB) * cb
        g = (y - KR * r - KB * b) / KG
        return np.stack([r, g, b], axis=-1)

    def is_gray(self) -> bool:
        return bool(np.all(self.cb == 0.5) and np.all(self.cr == 0.5))

    def __eq__(self, other):
        if not isinstance(other, ColorImage):
            return NotImplemented
        return (np.array_equal(self.y, other.y) and np.array_equal(self.cb, other.cb)
                and np.array_equal(self.cr, other.cr))


# ---------------------------------------------------------------------------
# decode / encode

def load_image(path) -> ColorImage:
    """Decode an 8-bit grayscale or RGB PNG/PGM/PPM file into YCbCr planes."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "RGBA", "PA"):
                im = im.convert("RGB")
                mode = "RGB"
            elif mode == "LA":
                im = im.convert("L")
                mode = "L"
            if mode not in ("L", "RGB"):
                raise UnsupportedBitDepthError(
                    f"{path}: unsupported image mode {im.mode!r}; need 8-bit L or RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except UnsupportedBitDepthError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc
    data = arr.astype(np.float64) / 255.0
    if mode == "L":
        return ColorImage.from_gray(data)
    return ColorImage.from_rgb(data)


def quantize8(plane) -> np.ndarray:
    return np.clip(np.rint(np.asarray(plane, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_image(img, fmt: str) -> bytes:
    """Encode a ColorImage or a bare plane to PNG/PGM/PPM bytes.

    Planes, grayscale ColorImages and anything written as PGM go out as 8-bit
    luma; everything else as 8-bit RGB.
    """
    fmt = fmt.lower().lstrip(".")
    if fmt not in ("png", "pgm", "ppm"):
        raise ValueError(f"unsupported output format {fmt!r}")
    if isinstance(img, ColorImage):
        if fmt == "pgm" or (fmt == "png" and img.is_gray()):
            pil = Image.fromarray(quantize8(img.y), mode="L")
        else:
            pil = Image.fromarray(quantize8(img.to_rgb()), mode="RGB")
    else:
        if fmt == "ppm":
            raise ValueError("a single plane cannot be written as PPM")
        pil = Image.fromarray(quantize8(img), mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="PNG" if fmt == "png" else "PPM")
    return buf.getvalue()


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a sibling temp file then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_image(img, path) -> None:
    path = Path(path)
    atomic_write_bytes(path, encode_image(img, path.suffix))


# ---------------------------------------------------------------------------
# synthetic distortions

def _jpeg_plane(plane, table):
    h, w = plane.shape
    ph, pw = -h % 8, -w % 8
    x = np.pad(plane * 255.0 - 128.0, ((0, ph), (0, pw)), mode="edge")
    H, W = x.shape
    blocks = x.reshape(H // 8, 8, W // 8, 8).transpose(0, 2, 1, 3)
    coef = sfft.dctn(blocks, axes=(2, 3), norm="ortho")
    coef = np.round(coef / table) * table
    rec = sfft.idctn(coef, axes=(2, 3), norm="ortho")
    rec = rec.transpose(0, 2, 1, 3).reshape(H, W)[:h, :w]
    return (rec + 128.0) / 255.0


def apply_distortion(img: ColorImage, kind: str, level: int, seed: int = 0) -> ColorImage:
    """Return a distorted copy of ``img``; output is a pure function of the arguments.

    Noise and impulses act on luma, blur and blocking on all three planes,
    contrast is scaled about the mean luma (and about 0.5 for chroma).
    """
    if kind not in DISTORTION_PARAMS:
        raise ValueError(f"unknown distortion {kind!r}; expected one of {DISTORTIONS}")
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= 5:
        raise ValueError(f"distortion level must be an integer in 1..5, got {level!r}")
    param = DISTORTION_PARAMS[kind][level - 1]
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    y, cb, cr = img.y, img.cb, img.cr

    if kind == "gaussian_noise":
        y = y + rng.normal(0.0, param, size=y.shape)
    elif kind == "gaussian_blur":
        y, cb, cr = (ndimage.gaussian_filter(p, param, mode="reflect") for p in (y, cb, cr))
    elif kind == "jpeg_blocking":
        y = _jpeg_plane(y, _JPEG_LUMA_Q * param)
        cb = _jpeg_plane(cb, _JPEG_CHROMA_Q * param)
        cr = _jpeg_plane(cr, _JPEG_CHROMA_Q * param)
    elif kind == "contrast_change":
        m = y.mean()
        y = m + param * (y - m)
        cb = 0.5 + param * (cb - 0.5)
        cr = 0.5 + param * (cr - 0.5)
    elif kind == "salt_pepper":
        hit = rng.random(y.shape) < param
        salt = rng.random(y.shape) < 0.5
        y = np.where(hit, salt.astype(np.float64), y)
        cb = np.where(hit, 0.5, cb)
        cr = np.where(hit, 0.5, cr)

    return ColorImage(np.clip(y, 0.0, 1.0), np.clip(cb, 0.0, 1.0), np.clip(cr, 0.0, 1.0))


# ---------------------------------------------------------------------------
# manifests

MANIFEST_HEADER = ("ref_path", "dist_path", "distortion_type", "level", "mos")


@dataclass(frozen=True)
class ManifestEntry:
    ref_path: str
    dist_path: str
    distortion_type: str
    level: int
    mos: Optional[float] = None


@dataclass
class DatasetManifest:
    entries: list
    root: Optional[Path] = None  # directory relative paths resolve against

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return list(self.entries) == list(other.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, p: str) -> Path:
        p = Path(p)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def filter(self, distortion_type: Optional[str] = None, refs: Optional[Iterable[str]] = None):
        keep = set(refs) if refs is not None else None
        entries = [e for e in self.entries
                   if (distortion_type is None or e.distortion_type == distortion_type)
                   and (keep is None or e.ref_path in keep)]
        return DatasetManifest(entries, self.root)


def _validate_entry(e: ManifestEntry, row: int) -> None:
    if e.distortion_type not in DISTORTIONS:
        raise ManifestError(f"unknown distortion_type {e.distortion_type!r}", row)
    if e.level < 1:
        raise ManifestError(f"level must be >= 1, got {e.level}", row)
    if not e.ref_path or not e.dist_path:
        raise ManifestError("empty path", row)


def write_manifest(manifest: DatasetManifest, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for i, e in enumerate(manifest.entries, start=1):
        _validate_entry(e, i)
        writer.writerow([e.ref_path, e.dist_path, e.distortion_type, e.level,
                         "" if e.mos is None else repr(float(e.mos))])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def parse_manifest(text: str, root: Optional[Path] = None, check_files: bool = False) -> DatasetManifest:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("missing header") from None
    if tuple(h.strip() for h in header) != MANIFEST_HEADER:
        raise ManifestError(f"bad header {header!r}; expected {','.join(MANIFEST_HEADER)}")
    entries = []
    dist_seen = {}
    for row, fields in enumerate(reader, start=1):
        if not fields:
            continue
        if len(fields) != 5:
            raise ManifestError(f"expected 5 fields, got {len(fields)}", row)
        ref, dist, kind, level_s, mos_s = (f.strip() for f in fields)
        try:
            level = int(level_s)
        except ValueError:
            raise ManifestError(f"level {level_s!r} is not an integer", row) from None
        try:
            mos = float(mos_s) if mos_s else None
        except ValueError:
            raise ManifestError(f"mos {mos_s!r} is not a number", row) from None
        entry = ManifestEntry(ref, dist, kind, level, mos)
        _validate_entry(entry, row)
        if dist in dist_seen and dist_seen[dist] != ref:
            raise ManifestError(f"{dist} already paired with {dist_seen[dist]}", row)
        dist_seen[dist] = ref
        if check_files:
            for p in (ref, dist):
                full = Path(p) if root is None or Path(p).is_absolute() else root / p
                if not full.is_file():
                    raise ManifestError(f"dangling file path {p!r}", row)
        entries.append(entry)
    return DatasetManifest(entries, root)


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest CSV. Relative paths resolve against the manifest's directory."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_manifest(text, root=path.parent, check_files=check_files)

