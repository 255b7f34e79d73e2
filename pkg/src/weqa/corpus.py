"""Reference images and synthetic distortion corpora.

Procedural textures are generated here; natural photographs come from the
sample images bundled with scikit-image when it is installed.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .imgio import (DISTORTIONS, ColorImage, DatasetManifest, ManifestEntry, apply_distortion,
                    save_image, write_manifest)

PHOTO_NAMES = ("camera", "astronaut", "coffee", "chelsea", "moon", "coins", "rocket",
               "brick", "grass", "gravel", "clock", "immunohistochemistry", "text", "page")


def _colorize(lum, rng):
    """Give a luminance texture a smooth random colour cast."""
    h, w = lum.shape
    tint = ndimage.gaussian_filter(rng.normal(size=(2, h, w)), (0, h / 6, w / 6), mode="wrap")
    tint /= np.abs(tint).max() + 1e-12
    cb = 0.5 + 0.15 * tint[0]
    cr = 0.5 + 0.15 * tint[1]
    return ColorImage(lum, cb, cr)


def _stretch(a):
    a = a - a.min()
    return 0.05 + 0.9 * a / (a.max() + 1e-12)


def procedural_texture(kind: int, size: int = 128, seed: int = 0) -> ColorImage:
    """One of eight texture families (``kind % 8``), randomised by ``seed``."""
    rng = np.random.default_rng([seed, kind])
    yy, xx = np.mgrid[0:size, 0:size] / size
    k = kind % 8
    if k == 0:  # oriented grating with a smooth envelope
        th = rng.uniform(0, np.pi)
        f = rng.uniform(4, 16)
        lum = np.sin(2 * np.pi * f * (xx * np.cos(th) + yy * np.sin(th)))
        lum *= 0.5 + 0.5 * np.cos(np.pi * (xx - 0.5))
    elif k == 1:  # 1/f noise
        spectrum = np.fft.fft2(rng.normal(size=(size, size)))
        fy, fx = np.meshgrid(np.fft.fftfreq(size), np.fft.fftfreq(size), indexing="ij")
        radius = np.hypot(fx, fy)
        radius[0, 0] = 1.0
        lum = np.real(np.fft.ifft2(spectrum / radius ** rng.uniform(1.0, 1.6)))
    elif k == 2:  # random discs on a gradient
        lum = xx * rng.uniform(-1, 1) + yy * rng.uniform(-1, 1)
        for _ in range(rng.integers(6, 14)):
            cy, cx, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.04, 0.2)
            lum = np.where((yy - cy) ** 2 + (xx - cx) ** 2 < r * r, rng.uniform(-1, 2), lum)
    elif k == 3:  # checkerboard with random cell size, lightly smoothed
        c = int(rng.integers(6, 20))
        lum = ((np.arange(size)[:, None] // c + np.arange(size)[None, :] // c) % 2).astype(float)
        lum = ndimage.gaussian_filter(lum, rng.uniform(0.3, 1.0))
    elif k == 4:  # voronoi patches
        pts = rng.uniform(0, 1, size=(int(rng.integers(10, 30)), 2))
        d = (yy[..., None] - pts[:, 0]) ** 2 + (xx[..., None] - pts[:, 1]) ** 2
        lum = rng.uniform(0, 1, size=pts.shape[0])[np.argmin(d, axis=-1)]
    elif k == 5:  # smooth blobs plus fine grain
        lum = ndimage.gaussian_filter(rng.normal(size=(size, size)), size / 16, mode="wrap")
        lum = lum / np.abs(lum).max() + 0.15 * ndimage.gaussian_filter(
            rng.normal(size=(size, size)), 0.8)
    elif k == 6:  # concentric rings (chirp)
        cy, cx = rng.uniform(0.3, 0.7, size=2)
        r = np.hypot(yy - cy, xx - cx)
        lum = np.cos(2 * np.pi * rng.uniform(20, 40) * r * r)
    else:  # stripes of mixed width and a diagonal edge
        widths = rng.integers(2, 12, size=64)
        edges = np.cumsum(widths)
        band = np.searchsorted(edges, np.arange(size)) % 2
        lum = np.where(yy > xx * rng.uniform(0.5, 1.5), band[None, :], band[:, None]).astype(float)
        lum = ndimage.gaussian_filter(lum, 0.6)
    return _colorize(_stretch(lum), rng)


def _resize_square(arr: np.ndarray, size: int) -> np.ndarray:
    h, w = arr.shape[:2]
    s = min(h, w)
    top, lft = (h - s) // 2, (w - s) // 2
    crop = arr[top:top + s, lft:lft + s]
    return np.asarray(Image.fromarray(crop).resize((size, size), Image.LANCZOS))


def sample_photos(names: Sequence[str] = PHOTO_NAMES, size: int = 128) -> dict:
    """Centre-cropped, resized scikit-image sample photographs.

    Raises ImportError when scikit-image is not installed.
    """
    from skimage import data as skdata

    out = {}
    for name in names:
        arr = getattr(skdata, name)()
        if arr.dtype != np.uint8:
            arr = (255 * (arr.astype(float) / max(arr.max(), 1))).astype(np.uint8)
        if arr.ndim == 3:
            arr = arr[..., :3]
        arr = _resize_square(arr, size).astype(np.float64) / 255.0
        out[name] = ColorImage.from_gray(arr) if arr.ndim == 2 else ColorImage.from_rgb(arr)
    return out


def reference_set(n_textures: int, photos: Iterable[str] = (), size: int = 128, seed: int = 0) -> dict:
    """Named reference images: ``n_textures`` procedural ones, then photographs."""
    refs = {f"texture{i:02d}": procedural_texture(i, size, seed) for i in range(n_textures)}
    photos = tuple(photos)
    if photos:
        refs.update({f"photo_{k}": v for k, v in sample_photos(photos, size).items()})
    return refs


def distortion_seed(seed: int, ref_index: int, kind: str, level: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, ref_index,
                                 DISTORTIONS.index(kind), level])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_corpus(refs: dict, out_dir, types: Sequence[str] = ("gaussian_noise",),
                 levels: Sequence[int] = (1, 2, 3, 4, 5), seed: int = 0,
                 manifest_path: Optional[Path] = None) -> DatasetManifest:
    """Write references and their distorted versions as PNG plus a manifest.

    Paths in the manifest are relative to the manifest's directory (``out_dir``
    unless ``manifest_path`` says otherwise).
    """
    out_dir = Path(out_dir)
    manifest_path = Path(manifest_path) if manifest_path else out_dir / "manifest.csv"
    root = manifest_path.parent.resolve()
    entries = []
    for i, (name, img) in enumerate(refs.items()):
        ref_file = out_dir / "ref" / f"{name}.png"
        save_image(img, ref_file)
        for kind in types:
            for level in levels:
                dist = apply_distortion(img, kind, level, distortion_seed(seed, i, kind, level))
                dist_file = out_dir / "dist" / f"{name}_{kind}_{level}.png"
                save_image(dist, dist_file)
                entries.append(ManifestEntry(
                    _relpath(ref_file, root), _relpath(dist_file, root), kind, int(level)))
    manifest = DatasetManifest(entries, root)
    write_manifest(manifest, manifest_path)
    return manifest


def _relpath(p: Path, root: Path) -> str:
    return Path(os.path.relpath(p.resolve(), root)).as_posix()
