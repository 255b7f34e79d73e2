"""Forest-induced kernels and the image-level kernel-ridge scorer.

Two pixels are similar in proportion to the number of trees that route them
to the same leaf. Lifted to images, the kernel is the mean pairwise pixel
kernel, which reduces to an inner product of per-tree leaf histograms; it is
then cosine-normalised so every image has unit self-similarity.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .errors import ConfigMismatchError, ModelFormatError
from .forest import ForestModel
from .imgio import atomic_write_bytes


def forest_kernel(model: ForestModel, x1, x2) -> float:
    """Fraction of trees in which ``x1`` and ``x2`` reach the same leaf."""
    sig = model.apply(np.vstack([np.ravel(x1), np.ravel(x2)]))
    return float(np.mean(sig[0] == sig[1]))


def forest_gram(model: ForestModel, X, Z=None) -> np.ndarray:
    """Pairwise forest kernel between the rows of ``X`` and ``Z`` (default ``X``)."""
    sx = model.apply(X)
    sz = sx if Z is None else model.apply(Z)
    K = np.zeros((sx.shape[0], sz.shape[0]))
    for t in range(sx.shape[1]):
        K += sx[:, t][:, None] == sz[:, t][None, :]
    return K / sx.shape[1]


def leaf_histogram(model: ForestModel, X) -> sparse.csr_matrix:
    """Per-tree normalised leaf histograms of a pixel set, as one sparse row.

    Columns index (tree, node) pairs laid end to end.
    """
    sig = model.apply(X)
    n, T = sig.shape
    offsets = np.concatenate([[0], np.cumsum([t.n_nodes for t in model.trees])])
    cols = (sig + offsets[:-1][None, :]).ravel()
    row = sparse.csr_matrix((np.full(cols.size, 1.0 / n), (np.zeros(cols.size, dtype=np.int64), cols)),
                            shape=(1, offsets[-1]))
    row.sum_duplicates()
    return row


def histogram_gram(H, G=None, n_trees: int = 1) -> np.ndarray:
    """Un-normalised image kernel ``(1/T) <h_A, h_B>`` between histogram rows."""
    G = H if G is None else G
    return np.asarray((H @ G.T).todense()) / n_trees


def fit_kernel_ridge(K, y, lam: float) -> tuple[np.ndarray, float]:
    """Weights ``(K + lam I)^-1 (y - mean y)`` and bias ``mean y``."""
    if not lam > 0:
        raise ValueError("regularisation lam must be > 0")
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bias = float(y.mean())
    A = K + lam * np.eye(K.shape[0])
    weights = linalg.solve(A, y - bias, assume_a="sym")
    return weights, bias


@dataclass
class KernelModel:
    support: sparse.csr_matrix  # (S, total nodes) leaf histograms
    self_sim: np.ndarray        # un-normalised K(A, A) of each support image
    weights: np.ndarray
    bias: float
    lam: float
    n_trees: int
    forest_id: str

    def gram_to(self, H) -> np.ndarray:
        """Normalised kernel between new histogram rows and the support set."""
        raw = histogram_gram(H, self.support, self.n_trees)
        own = histogram_gram(H, None, self.n_trees).diagonal()
        return raw / np.sqrt(np.outer(own, self.self_sim))

    def predict(self, H) -> np.ndarray:
        return self.bias + self.gram_to(H) @ self.weights


def normalized_gram(H, n_trees: int) -> tuple[np.ndarray, np.ndarray]:
    raw = histogram_gram(H, None, n_trees)
    d = raw.diagonal().copy()
    return raw / np.sqrt(np.outer(d, d)), d


def train_kernel_scorer(model: ForestModel, histograms, targets, lam: float = 1.0,
                        forest_id: str = None) -> KernelModel:
    """Kernel ridge regression of image scores on forest-kernel similarities.

    ``histograms`` are :func:`leaf_histogram` rows (one per training image),
    ``targets`` the full-reference scores.
    """
    from .modelio import model_id

    H = sparse.vstack(list(histograms)).tocsr() if not sparse.issparse(histograms) else histograms.tocsr()
    y = np.asarray(targets, dtype=np.float64)
    if H.shape[0] < 5:
        raise ValueError(f"need at least 5 training images, got {H.shape[0]}")
    if y.shape != (H.shape[0],):
        raise ValueError("one target per histogram required")
    K, d = normalized_gram(H, len(model.trees))
    weights, bias = fit_kernel_ridge(K, y, lam)
    return KernelModel(H, d, weights, bias, float(lam), len(model.trees),
                       forest_id or model_id(model))


def kernel_score(scorer: KernelModel, model: ForestModel, X, forest_id: str = None) -> float:
    """Image score from pixel descriptors ``X``, clamped to (0, 1]."""
    from .modelio import model_id

    fid = forest_id or model_id(model)
    if fid != scorer.forest_id:
        raise ConfigMismatchError(
            f"kernel scorer was trained against forest {scorer.forest_id[:12]}, got {fid[:12]}")
    q = float(scorer.predict(leaf_histogram(model, X))[0])
    return min(max(q, np.finfo(float).tiny), 1.0)


# ---------------------------------------------------------------------------
# persistence
#
#   magic b"NRIQAK1\0" | forest_id 64 ascii hex | n_trees u32 | lam f64 | bias f64
#   | S u32 | n_cols u64 | nnz u64 | indptr u64[S+1] | indices u64[nnz]
#   | data f64[nnz] | self_sim f64[S] | weights f64[S]

KERNEL_MAGIC = b"NRIQAK1\0"
_KHEAD = struct.Struct("<8s64sIddIQQ")


def kernel_model_bytes(km: KernelModel) -> bytes:
    H = km.support.tocsr()
    H.sort_indices()
    parts = [
        _KHEAD.pack(KERNEL_MAGIC, km.forest_id.encode("ascii"), km.n_trees, km.lam, km.bias,
                    H.shape[0], H.shape[1], H.nnz),
        H.indptr.astype("<u8").tobytes(), H.indices.astype("<u8").tobytes(),
        H.data.astype("<f8").tobytes(), np.asarray(km.self_sim, "<f8").tobytes(),
        np.asarray(km.weights, "<f8").tobytes(),
    ]
    return b"".join(parts)


def save_kernel_model(km: KernelModel, path) -> str:
    data = kernel_model_bytes(km)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def load_kernel_model(path) -> KernelModel:
    data = Path(path).read_bytes()
    if len(data) < _KHEAD.size:
        raise ModelFormatError(f"{path}: truncated kernel model")
    magic, fid, T, lam, bias, S, ncols, nnz = _KHEAD.unpack_from(data)
    if magic != KERNEL_MAGIC:
        raise ModelFormatError(f"{path}: not a kernel model (magic {magic!r})")
    need = _KHEAD.size + 8 * (S + 1) + 16 * nnz + 16 * S
    if len(data) != need:
        raise ModelFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    off = _KHEAD.size
    indptr = np.frombuffer(data, "<u8", S + 1, off).astype(np.int64)
    off += 8 * (S + 1)
    indices = np.frombuffer(data, "<u8", nnz, off).astype(np.int64)
    off += 8 * nnz
    vals = np.frombuffer(data, "<f8", nnz, off).copy()
    off += 8 * nnz
    self_sim = np.frombuffer(data, "<f8", S, off).copy()
    weights = np.frombuffer(data, "<f8", S, off + 8 * S).copy()
    H = sparse.csr_matrix((vals, indices, indptr), shape=(S, ncols))
    return KernelModel(H, self_sim, weights, bias, lam, T, fid.decode("ascii"))
