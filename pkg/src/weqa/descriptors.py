"""Per-pixel descriptors and stratified training-set construction.

A descriptor is ``F = M + 10`` values::

    [0, M)      wave-vector of the luma plane (fine-to-coarse, see wavelet)
    M + 0, 1    Cb(p), Cr(p)
    M + 2, 3    mean and std of Y over the window (3x3 by default)
    M + 4, 5    mean and std of chroma energy (Cb-.5)^2 + (Cr-.5)^2 over the window
    M + 6       mean forward-difference gradient magnitude of Y in the window
    M + 7       squared 4-neighbour Laplacian of Y at p
    M + 8, 9    min and max of Y over the window

Windows are clamped at the borders, so a descriptor only depends on the
window around ``p`` and on the wavelet coefficients whose support covers it.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ModelFormatError, WeqaError
from .fr import weqa_assess
from .imgio import ColorImage, DatasetManifest, atomic_write_bytes, load_image
from .wavelet import WaveletPyramid, default_levels, dwt2, wave_vector_at, wave_vectors

N_LOCAL = 10
LOCAL_NAMES = ("cb", "cr", "mean_y", "std_y", "mean_chroma_energy", "std_chroma_energy",
               "grad_mean", "laplacian_energy", "min_y", "max_y")


def descriptor_size(levels: int) -> int:
    return 3 * levels + 1 + N_LOCAL


def feature_names(levels: int) -> list:
    names = []
    for j in range(1, levels + 1):
        names += [f"H{j}", f"V{j}", f"D{j}"]
    return names + [f"A{levels}"] + list(LOCAL_NAMES)


def _wmean(a):
    """Mean over the two trailing axes, summed row by row in a fixed order so
    a single window and a whole-image stack of windows give identical bits."""
    n = a.shape[-1] * a.shape[-2]
    return a.sum(axis=-1).sum(axis=-1) / n


def _wmoments(a):
    """Window mean and std, computed about the first sample so constant
    windows come out exact."""
    base = a[..., :1, :1]
    s = a - base
    ms = _wmean(s)
    d = s - ms[..., None, None]
    return base[..., 0, 0] + ms, np.sqrt(_wmean(d * d))


def _window_stats(wy, wcb, wcr, cb, cr) -> np.ndarray:
    """Local features from ``(..., s, s)`` windows; ``cb``/``cr`` are centre values."""
    c = wy.shape[-1] // 2
    ecb, ecr = wcb - 0.5, wcr - 0.5
    energy = ecb * ecb + ecr * ecr
    gx = wy[..., :-1, 1:] - wy[..., :-1, :-1]
    gy = wy[..., 1:, :-1] - wy[..., :-1, :-1]
    grad = _wmean(np.sqrt(gx * gx + gy * gy))
    lap = (wy[..., c - 1, c] + wy[..., c + 1, c] + wy[..., c, c - 1] + wy[..., c, c + 1]
           - 4.0 * wy[..., c, c])
    lap = lap * lap
    my, sy = _wmoments(wy)
    me, se = _wmoments(energy)
    return np.stack([
        cb, cr,
        my, sy,
        me, se,
        grad, lap,
        wy.min(axis=(-2, -1)), wy.max(axis=(-2, -1)),
    ], axis=-1)


def _windows(plane, size):
    return sliding_window_view(np.pad(plane, size // 2, mode="edge"), (size, size))


def _check_window(size):
    if size < 3 or size % 2 == 0:
        raise ValueError(f"neighbourhood window must be odd and >= 3, got {size}")


def local_features(img: ColorImage, window: int = 3) -> np.ndarray:
    """``(h, w, 10)`` colour and neighbourhood features of every pixel."""
    _check_window(window)
    return _window_stats(_windows(img.y, window), _windows(img.cb, window),
                         _windows(img.cr, window), img.cb, img.cr)


def describe_image(img: ColorImage, pyr: WaveletPyramid, window: int = 3) -> np.ndarray:
    """Descriptors of every pixel as an ``(h, w, F)`` array."""
    if pyr.shape != img.shape:
        raise ValueError(f"pyramid built for {pyr.shape}, image is {img.shape}")
    return np.concatenate([wave_vectors(pyr), local_features(img, window)], axis=-1)


def describe_pixel(img: ColorImage, pyr: WaveletPyramid, p, window: int = 3) -> np.ndarray:
    """Descriptor of pixel ``p = (row, col)``; equals ``describe_image(img, pyr)[p]``."""
    _check_window(window)
    r, c = p
    h, w = img.shape
    k = window // 2
    rows = np.clip(np.arange(r - k, r + k + 1), 0, h - 1)
    cols = np.clip(np.arange(c - k, c + k + 1), 0, w - 1)
    win = np.ix_(rows, cols)
    # a 1x1 stack of windows, so the arithmetic runs through the same array code
    local = _window_stats(img.y[win][None, None], img.cb[win][None, None], img.cr[win][None, None],
                          img.cb[r:r + 1, c:c + 1], img.cr[r:r + 1, c:c + 1]).reshape(-1)
    return np.concatenate([wave_vector_at(pyr, p), local])


def quantize(y, edges) -> np.ndarray:
    """Bin index = number of edges strictly below ``y``."""
    return np.searchsorted(np.asarray(edges, dtype=np.float64), y, side="left")


def label_pixels(dmap, edges) -> tuple[np.ndarray, np.ndarray]:
    edges = np.asarray(edges, dtype=np.float64)
    if edges.size > 1 and not np.all(np.diff(edges) > 0):
        raise ValueError("bin edges must be strictly ascending")
    y = np.asarray(dmap, dtype=np.float64)
    return y, quantize(y, edges)


def quantile_edges(values, strata: int) -> np.ndarray:
    """Strictly ascending interior quantile edges (duplicates dropped)."""
    if strata < 2:
        return np.empty(0)
    qs = np.arange(1, strata) / strata
    return np.unique(np.quantile(np.asarray(values, dtype=np.float64).ravel(), qs))


def balanced_allocation(available: Sequence[int], budget: int) -> np.ndarray:
    """Split ``budget`` across strata as evenly as availability allows.

    Strata that are not exhausted receive counts within one of each other and
    the total never exceeds ``min(budget, sum(available))``.
    """
    available = np.asarray(available, dtype=np.int64)
    alloc = np.zeros_like(available)
    remaining = min(int(budget), int(available.sum()))
    order = np.argsort(available, kind="stable")
    left = int(np.count_nonzero(available))
    for k in order:
        if available[k] == 0:
            continue
        take = min(int(available[k]), remaining // left)
        alloc[k] = take
        remaining -= take
        left -= 1
    # hand out the remainder one by one to strata with room, lowest index first
    for k in range(available.size):
        if remaining == 0:
            break
        if alloc[k] < available[k]:
            alloc[k] += 1
            remaining -= 1
    return alloc


@dataclass(frozen=True)
class SamplingPolicy:
    per_image: int = 2000
    strata: int = 4
    seed: int = 0
    edges: Optional[tuple] = None  # fixed strata edges; None = per-image quantiles

    def __post_init__(self):
        if self.per_image < 1:
            raise ValueError("per_image must be >= 1")
        if self.strata < 1:
            raise ValueError("strata must be >= 1")
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=np.float64)
            if e.size != self.strata - 1 or (e.size > 1 and not np.all(np.diff(e) > 0)):
                raise ValueError("edges must be strata-1 strictly ascending thresholds")


def stratified_pixels(dmap, policy: SamplingPolicy, rng: np.random.Generator) -> np.ndarray:
    """Flat pixel indices drawn from ``dmap``, balanced across distortion strata."""
    flat = np.asarray(dmap, dtype=np.float64).ravel()
    n = flat.size
    edges = np.asarray(policy.edges) if policy.edges is not None else quantile_edges(flat, policy.strata)
    if edges.size == 0 or flat.min() == flat.max():
        return np.sort(rng.choice(n, size=min(policy.per_image, n), replace=False))
    bins = quantize(flat, edges)
    members = [np.flatnonzero(bins == k) for k in range(edges.size + 1)]
    alloc = balanced_allocation([m.size for m in members], policy.per_image)
    picked = [rng.choice(m, size=a, replace=False) for m, a in zip(members, alloc) if a > 0]
    return np.sort(np.concatenate(picked))


@dataclass(frozen=True)
class FrConfig:
    levels: Optional[int] = None  # None = default_levels of the image size
    filter: str = "haar"
    g_sigma: float = 1.0
    window: int = 3  # descriptor neighbourhood size

    def levels_for(self, shape) -> int:
        return self.levels if self.levels is not None else default_levels(shape)


@dataclass
class TrainingSet:
    """Labelled pixel samples as parallel arrays (one row per sample)."""

    X: np.ndarray            # (n, F) float32 descriptors
    y: np.ndarray            # (n,) distortion d(p)
    edges: np.ndarray        # label bin edges
    entry: np.ndarray = None  # manifest entry of each sample
    pixel: np.ndarray = None  # (n, 2) row, col
    meta: dict = field(default_factory=dict)

    @property
    def bins(self) -> np.ndarray:
        return quantize(self.y, self.edges)

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


class EntryError(WeqaError):
    """A manifest entry could not be processed."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"manifest entry {index}: {message}")


def _process_entry(args):
    index, manifest, entry, policy, fr_config = args
    try:
        ref = load_image(manifest.resolve(entry.ref_path))
        dist = load_image(manifest.resolve(entry.dist_path))
    except (WeqaError, OSError) as exc:
        raise EntryError(index, str(exc)) from exc
    levels = fr_config.levels_for(dist.shape)
    fr = weqa_assess(ref, dist, levels, fr_config.filter, fr_config.g_sigma)
    rng = np.random.default_rng(np.random.SeedSequence([policy.seed & 0xFFFFFFFFFFFFFFFF, index]))
    idx = stratified_pixels(fr.map, policy, rng)
    rows, cols = np.unravel_index(idx, dist.shape)
    desc = describe_image(dist, dwt2(dist.y, levels, fr_config.filter), fr_config.window)
    return (desc[rows, cols].astype(np.float32), fr.map[rows, cols],
            np.stack([rows, cols], axis=1), levels)


def sample_training_set(manifest: DatasetManifest, policy: SamplingPolicy = SamplingPolicy(),
                        fr_config: FrConfig = FrConfig(), jobs: int = 1) -> TrainingSet:
    """Run WEQA on every (reference, distorted) pair and sample labelled pixels.

    Output order follows the manifest regardless of ``jobs``.
    """
    entries = list(manifest.entries)
    if not entries:
        raise ValueError("manifest has no entries")
    tasks = [(i, manifest, e, policy, fr_config) for i, e in enumerate(entries)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_process_entry, tasks))
    else:
        results = [_process_entry(t) for t in tasks]
    levels = {r[3] for r in results}
    if len(levels) != 1:
        raise ValueError(f"entries disagree on decomposition depth: {sorted(levels)}")
    X = np.concatenate([r[0] for r in results])
    y = np.concatenate([r[1] for r in results])
    entry = np.concatenate([np.full(len(r[1]), i, dtype=np.int64) for i, r in enumerate(results)])
    pixel = np.concatenate([r[2] for r in results])
    L = levels.pop()
    edges = quantile_edges(y, policy.strata) if policy.edges is None else np.asarray(policy.edges, float)
    meta = {
        "levels": L,
        "filter": fr_config.filter,
        "g_sigma": fr_config.g_sigma,
        "window": fr_config.window,
        "n_features": X.shape[1],
        "order": 3 * L + 1,
        "edges": [float(e) for e in edges],
        "per_image": policy.per_image,
        "strata": policy.strata,
        "seed": policy.seed,
        "n_entries": len(entries),
    }
    return TrainingSet(X, y, edges, entry, pixel, meta)


# ---------------------------------------------------------------------------
# flat binary export
#
#   magic b"NRIQADS1" | F uint32 | count uint64 | n_edges uint32 | edges float64[n_edges]
#   count records of (F + 1) float32: descriptor then y

DS_MAGIC = b"NRIQADS1"
_DS_HEAD = struct.Struct("<8sIQI")


def training_set_bytes(ts: TrainingSet) -> bytes:
    edges = np.asarray(ts.edges, dtype="<f8")
    head = _DS_HEAD.pack(DS_MAGIC, ts.n_features, len(ts), edges.size) + edges.tobytes()
    rec = np.concatenate([ts.X.astype("<f4"), ts.y.astype("<f4")[:, None]], axis=1)
    return head + rec.tobytes()


def write_training_set(ts: TrainingSet, path) -> None:
    atomic_write_bytes(path, training_set_bytes(ts))


def read_training_set(path) -> TrainingSet:
    data = Path(path).read_bytes()
    if len(data) < _DS_HEAD.size:
        raise ModelFormatError(f"{path}: truncated header")
    magic, F, count, n_edges = _DS_HEAD.unpack_from(data)
    if magic != DS_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    off = _DS_HEAD.size
    need = off + 8 * n_edges + 4 * (F + 1) * count
    if len(data) != need:
        raise ModelFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    edges = np.frombuffer(data, "<f8", n_edges, off).astype(np.float64)
    off += 8 * n_edges
    rec = np.frombuffer(data, "<f4", (F + 1) * count, off).reshape(count, F + 1)
    X = rec[:, :F].astype(np.float32)
    y = rec[:, F].astype(np.float64)
    return TrainingSet(X, y, edges, meta={"n_features": F})
