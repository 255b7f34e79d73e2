"""Binary model files. The byte layout is documented in docs/formats.md."""
from __future__ import annotations

import hashlib
import io
import struct
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .forest import LEAF, ForestConfig, ForestModel, Tree
from .imgio import atomic_write_bytes

MAGIC_PREFIX = b"NRIQA"
FORMAT_VERSION = 1
MAGIC = MAGIC_PREFIX + str(FORMAT_VERSION).encode()

_LEAF_MARK = 0xFFFF
# both node kinds are 14 bytes; a leaf's id is its position in the array
NODE_DTYPE = np.dtype([("feature", "<u2"), ("threshold", "<f4"), ("left", "<u4"), ("right", "<u4")])
LEAF_DTYPE = np.dtype([("marker", "<u2"), ("value", "<f8"), ("count", "<u4")])
assert NODE_DTYPE.itemsize == LEAF_DTYPE.itemsize == 14

_CONFIG = struct.Struct("<IIIIQ")   # n_trees, k_candidates, min_leaf, max_depth, seed
_META = struct.Struct("<IIIIdI")    # F, M, L, window, g_sigma, n_edges


class UnsupportedVersionError(ModelFormatError):
    pass


def _encode_tree(tree: Tree) -> bytes:
    nodes = np.zeros(tree.n_nodes, dtype=NODE_DTYPE)
    leaf = tree.feature == LEAF
    nodes["feature"] = np.where(leaf, _LEAF_MARK, tree.feature)
    nodes["threshold"] = np.where(leaf, 0, tree.threshold)
    nodes["left"] = np.where(leaf, 0, tree.left)
    nodes["right"] = np.where(leaf, 0, tree.right)
    leaves = nodes.view(LEAF_DTYPE)
    leaves["value"][leaf] = tree.value[leaf]
    leaves["count"][leaf] = tree.count[leaf]
    return struct.pack("<I", tree.n_nodes) + nodes.tobytes()


def model_bytes(model: ForestModel) -> bytes:
    cfg = model.config
    meta = model.meta
    if model.n_features >= _LEAF_MARK:
        raise ValueError("too many features for the node encoding")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_CONFIG.pack(cfg.n_trees, cfg.k_candidates, cfg.min_leaf, cfg.max_depth,
                           int(cfg.seed) & 0xFFFFFFFFFFFFFFFF))
    filt = str(meta.get("filter", "haar")).encode("ascii")
    edges = np.asarray(meta.get("edges", ()), dtype="<f8")
    out.write(_META.pack(model.n_features, int(meta.get("order", 0)), int(meta.get("levels", 0)),
                         int(meta.get("window", 3)), float(meta.get("g_sigma", 1.0)), edges.size))
    out.write(struct.pack("<B", len(filt)) + filt)
    out.write(edges.tobytes())
    out.write(np.asarray(model.feature_mean, dtype="<f8").tobytes())
    out.write(np.asarray(model.feature_std, dtype="<f8").tobytes())
    for tree in model.trees:
        out.write(_encode_tree(tree))
    return out.getvalue()


def model_id(model: ForestModel) -> str:
    """Content hash of the serialised model."""
    return hashlib.sha256(model_bytes(model)).hexdigest()


def save_model(model: ForestModel, path) -> str:
    data = model_bytes(model)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"{self.name}: truncated model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))


def parse_model(data: bytes, name: str = "<bytes>") -> ForestModel:
    r = _Reader(data, name)
    magic = r.take(len(MAGIC))
    if not magic.startswith(MAGIC_PREFIX):
        raise ModelFormatError(f"{name}: not a model file (magic {magic!r})")
    if magic != MAGIC:
        raise UnsupportedVersionError(
            f"{name}: model format {magic.decode(errors='replace')!r} is not supported "
            f"(expected {MAGIC.decode()})")
    n_trees, k, min_leaf, max_depth, seed = r.unpack(_CONFIG)
    F, M, L, window, g_sigma, n_edges = r.unpack(_META)
    (flen,) = struct.unpack("<B", r.take(1))
    filt = r.take(flen).decode("ascii")
    edges = np.frombuffer(r.take(8 * n_edges), "<f8").astype(np.float64)
    mean = np.frombuffer(r.take(8 * F), "<f8").astype(np.float64)
    std = np.frombuffer(r.take(8 * F), "<f8").astype(np.float64)
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = struct.unpack("<I", r.take(4))
        nodes = np.frombuffer(r.take(NODE_DTYPE.itemsize * n_nodes), NODE_DTYPE)
        leaves = nodes.view(LEAF_DTYPE)
        leaf = nodes["feature"] == _LEAF_MARK
        feature = np.where(leaf, LEAF, nodes["feature"].astype(np.int32))
        if (n_nodes == 0 or np.any(feature >= F)
                or np.any(~leaf & ((nodes["left"] >= n_nodes) | (nodes["right"] >= n_nodes)))):
            raise ModelFormatError(f"{name}: corrupt tree node")
        trees.append(Tree(
            feature,
            np.where(leaf, np.float32(0), nodes["threshold"]).astype(np.float32),
            np.where(leaf, 0, nodes["left"]).astype(np.int32),
            np.where(leaf, 0, nodes["right"]).astype(np.int32),
            np.where(leaf, leaves["value"], 0.0).astype(np.float64),
            np.where(leaf, leaves["count"], 0).astype(np.int32),
        ))
    if r.pos != len(data):
        raise ModelFormatError(f"{name}: {len(data) - r.pos} trailing bytes")
    config = ForestConfig(n_trees, k, min_leaf, max_depth, seed)
    meta = {"n_features": F, "order": M, "levels": L, "window": window, "filter": filt,
            "g_sigma": g_sigma, "edges": [float(e) for e in edges]}
    return ForestModel(trees, config, meta, mean, std)


def load_model(path) -> ForestModel:
    path = Path(path)
    return parse_model(path.read_bytes(), str(path))
