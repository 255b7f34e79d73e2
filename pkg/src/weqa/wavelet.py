"""Separable orthonormal 2-D DWT (periodised, odd sizes via one-sample
symmetric extension) and per-pixel wave-vector extraction.

Subband naming follows the usual convention: ``H`` is low-pass along x and
high-pass along y (it responds to horizontal edges), ``V`` the transpose and
``D`` high-pass in both directions.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatchError, LevelsError

_S3 = np.sqrt(3.0)
FILTERS = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * np.sqrt(2.0)),
}


def default_levels(shape) -> int:
    """Decomposition depth used when none is configured: 4 for images whose
    short side is at least 64 px, else ``floor(log2(short side)) - 1``."""
    m = min(shape)
    if m >= 64:
        return 4
    return max(1, int(np.floor(np.log2(m))) - 1)


def max_levels(shape) -> int:
    return int(np.floor(np.log2(min(shape))))


@lru_cache(maxsize=None)
def _analysis_matrix(n: int, name: str) -> np.ndarray:
    """Orthogonal periodised analysis operator for even length ``n``.

    Rows ``[:n//2]`` produce the approximation, rows ``[n//2:]`` the detail.
    """
    h = FILTERS[name]
    g = h[::-1] * (-1.0) ** np.arange(h.size)
    half = n // 2
    W = np.zeros((n, n))
    for i in range(half):
        for k in range(h.size):
            W[i, (2 * i + k) % n] += h[k]
            W[half + i, (2 * i + k) % n] += g[k]
    W.flags.writeable = False
    return W


@lru_cache(maxsize=None)
def _operators(n: int, name: str):
    """(analysis, synthesis) matrices for arbitrary length ``n``.

    Odd lengths are extended by repeating the last sample, so the analysis is
    ``W @ E`` and the synthesis ``R @ W.T`` with ``E`` the extension and ``R``
    the crop.
    """
    if n % 2 == 0:
        W = _analysis_matrix(n, name)
        return W, W.T
    W = _analysis_matrix(n + 1, name)
    A = W[:, :n].copy()
    A[:, n - 1] += W[:, n]
    S = W.T[:n, :].copy()
    A.flags.writeable = False
    S.flags.writeable = False
    return A, S


def dwt1(signal, filter: str = "haar") -> tuple[np.ndarray, np.ndarray]:
    """One analysis step of a 1-D signal: ``(approximation, detail)``."""
    x = np.asarray(signal, dtype=np.float64)
    if filter not in FILTERS:
        raise ValueError(f"unknown wavelet filter {filter!r}")
    if x.ndim != 1 or x.size < 2:
        raise ValueError("dwt1 expects a 1-D signal of length >= 2")
    A, _ = _operators(x.size, filter)
    t = A @ x
    half = (x.size + 1) // 2
    return t[:half], t[half:]


@dataclass(frozen=True)
class WaveletPyramid:
    """``details[j-1]`` holds ``(H_j, V_j, D_j)``; ``sizes[j-1]`` is the input
    shape that level ``j`` decomposed."""

    details: tuple
    approx: np.ndarray
    sizes: tuple
    filter: str

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def shape(self) -> tuple:
        return self.sizes[0]

    @property
    def order(self) -> int:
        """Wave-vector length ``3L + 1``."""
        return 3 * self.levels + 1

    def coefficients(self):
        """Iterate over every subband array."""
        for trio in self.details:
            yield from trio
        yield self.approx


def _check_levels(shape, levels: int) -> None:
    if levels < 1:
        raise LevelsError(f"levels must be >= 1, got {levels}")
    if min(shape) < 2 ** levels:
        raise LevelsError(
            f"{levels} levels need a short side of at least {2 ** levels} px, "
            f"image is {shape[1]}x{shape[0]}")


def dwt2(plane, levels: int, filter: str = "haar") -> WaveletPyramid:
    """Multi-level 2-D analysis of ``plane``."""
    if filter not in FILTERS:
        raise ValueError(f"unknown wavelet filter {filter!r}; expected one of {sorted(FILTERS)}")
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("dwt2 expects a 2-D plane")
    _check_levels(x.shape, levels)
    details, sizes = [], []
    for _ in range(levels):
        sizes.append(x.shape)
        Ay, _ = _operators(x.shape[0], filter)
        Ax, _ = _operators(x.shape[1], filter)
        hy, hx = (x.shape[0] + 1) // 2, (x.shape[1] + 1) // 2
        t = Ay @ x @ Ax.T
        ll, hh = t[:hy, :hx], t[hy:, hx:]
        horiz = t[hy:, :hx]
        vert = t[:hy, hx:]
        details.append((horiz.copy(), vert.copy(), hh.copy()))
        x = ll.copy()
    return WaveletPyramid(tuple(details), x, tuple(sizes), filter)


def idwt2(pyr: WaveletPyramid) -> np.ndarray:
    """Synthesis: invert :func:`dwt2`."""
    x = pyr.approx
    for j in range(pyr.levels - 1, -1, -1):
        h, w = pyr.sizes[j]
        horiz, vert, diag = pyr.details[j]
        hy, hx = (h + 1) // 2, (w + 1) // 2
        for name, band in (("approx", x), ("H", horiz), ("V", vert), ("D", diag)):
            if band.shape != (hy, hx):
                raise DimensionMismatchError(
                    f"level {j + 1} {name} subband is {band.shape}, expected {(hy, hx)}")
        _, Sy = _operators(h, pyr.filter)
        _, Sx = _operators(w, pyr.filter)
        t = np.block([[x, vert], [horiz, diag]])
        x = Sy @ t @ Sx.T
    return x


def _subbands_fine_to_coarse(pyr: WaveletPyramid):
    for j, trio in enumerate(pyr.details, start=1):
        for band in trio:
            yield j, band
    yield pyr.levels, pyr.approx


def wave_vectors(pyr: WaveletPyramid) -> np.ndarray:
    """Wave-vectors of every pixel as an ``(h, w, 3L+1)`` array.

    Component order is ``H1, V1, D1, ..., HL, VL, DL, AL``; the level-``j``
    components of pixel ``(r, c)`` come from subband index
    ``(r >> j, c >> j)``.
    """
    h, w = pyr.shape
    rows, cols = np.arange(h), np.arange(w)
    out = np.empty((h, w, pyr.order))
    for i, (j, band) in enumerate(_subbands_fine_to_coarse(pyr)):
        out[:, :, i] = band[np.ix_(rows >> j, cols >> j)]
    return out


def wave_vector_at(pyr: WaveletPyramid, p) -> np.ndarray:
    """Wave-vector of one pixel ``p = (row, col)``."""
    r, c = p
    h, w = pyr.shape
    if not (0 <= r < h and 0 <= c < w):
        raise IndexError(f"pixel {p} outside a {h}x{w} image")
    return np.array([band[r >> j, c >> j] for j, band in _subbands_fine_to_coarse(pyr)])


def dc_gain(filter: str, levels: int) -> float:
    """Factor mapping a constant plane to its level-``L`` approximation value."""
    return float(np.sum(FILTERS[filter])) ** (2 * levels)
