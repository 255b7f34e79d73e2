"""Full-reference assessment: the anisotropic wave-vector distance (WEQA)
and a Gaussian-window SSIM baseline. Both return a per-pixel map plus a
pooled score."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError
from .imgio import ColorImage
from .wavelet import default_levels, dwt2, wave_vectors

MAX_ORDER = 64


@dataclass(frozen=True)
class CouplingMatrix:
    """``g[i, j] = exp(-(i - j)**2 / (2 sigma**2))`` with its Cholesky factor."""

    g: np.ndarray
    chol: np.ndarray
    sigma: float = 1.0

    @property
    def order(self) -> int:
        return self.g.shape[0]


@lru_cache(maxsize=None)
def coupling_matrix(order: int, sigma: float = 1.0) -> CouplingMatrix:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"coupling order must be in 1..{MAX_ORDER}, got {order}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    idx = np.arange(order)
    g = np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * sigma * sigma))
    chol = np.linalg.cholesky(g)
    g.flags.writeable = False
    chol.flags.writeable = False
    return CouplingMatrix(g, chol, float(sigma))


def weqa_distance(phi, phi_prime, g: CouplingMatrix):
    """``sqrt(delta^T g delta)`` with ``delta = phi - phi_prime``.

    Works on single vectors or on stacks whose last axis is the wave-vector.
    """
    phi = np.asarray(phi, dtype=np.float64)
    phi_prime = np.asarray(phi_prime, dtype=np.float64)
    if phi.shape != phi_prime.shape:
        raise DimensionMismatchError(f"wave-vector shapes differ: {phi.shape} vs {phi_prime.shape}")
    if phi.shape[-1] != g.order:
        raise DimensionMismatchError(
            f"wave-vector length {phi.shape[-1]} does not match coupling order {g.order}")
    # delta^T L L^T delta = |L^T delta|^2
    z = (phi - phi_prime) @ g.chol
    return np.sqrt(np.einsum("...i,...i->...", z, z))


@dataclass
class FrResult:
    map: np.ndarray
    mean_distortion: float
    o_score: float
    extra: dict = field(default_factory=dict)


def pool(dmap) -> tuple[float, float]:
    """Mean distortion and the bounded score ``1 / (1 + mean)``."""
    mean = float(np.mean(dmap))
    return mean, 1.0 / (1.0 + mean)


def _check_same_shape(ref: ColorImage, dist: ColorImage) -> None:
    if ref.shape != dist.shape:
        raise DimensionMismatchError(
            f"reference is {ref.width}x{ref.height}, distorted is {dist.width}x{dist.height}")


def weqa_map(ref_plane, dist_plane, levels: int, filter: str = "haar", g_sigma: float = 1.0) -> np.ndarray:
    pr = dwt2(ref_plane, levels, filter)
    pd = dwt2(dist_plane, levels, filter)
    g = coupling_matrix(pr.order, g_sigma)
    return weqa_distance(wave_vectors(pr), wave_vectors(pd), g)


def weqa_assess(ref: ColorImage, dist: ColorImage, levels: int = 4, filter: str = "haar",
                g_sigma: float = 1.0) -> FrResult:
    """WEQA on the luma planes: distortion map, mean distortion and score."""
    _check_same_shape(ref, dist)
    dmap = weqa_map(ref.y, dist.y, levels, filter, g_sigma)
    mean, q = pool(dmap)
    return FrResult(dmap, mean, q)


@dataclass
class SsimResult:
    ssim_map: np.ndarray
    mean_ssim: float

    @property
    def distortion_map(self) -> np.ndarray:
        return 1.0 - self.ssim_map


def ssim_assess(ref: ColorImage, dist: ColorImage, sigma: float = 1.5, k1: float = 0.01,
                k2: float = 0.03, data_range: float = 1.0) -> SsimResult:
    """SSIM on luma with an 11x11 Gaussian window (sigma 1.5, reflected borders)."""
    _check_same_shape(ref, dist)
    x, y = ref.y, dist.y
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def blur(a):
        return ndimage.gaussian_filter(a, sigma, mode="reflect", truncate=3.5)

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    smap = num / den
    return SsimResult(smap, float(smap.mean()))


def fr_assess(ref: ColorImage, dist: ColorImage, levels: Optional[int] = None, filter: str = "haar",
              g_sigma: float = 1.0) -> FrResult:
    """:func:`weqa_assess` with the default depth for the image size."""
    if levels is None:
        levels = default_levels(ref.shape)
    return weqa_assess(ref, dist, levels, filter, g_sigma)
