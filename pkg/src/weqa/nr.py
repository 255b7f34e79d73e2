"""Blind assessment: predicted distortion maps and scores from a trained forest."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .descriptors import describe_image, descriptor_size
from .errors import ConfigMismatchError
from .forest import ForestModel
from .fr import pool
from .imgio import ColorImage
from .kernel import KernelModel, kernel_score
from .modelio import model_id as compute_model_id
from .wavelet import dwt2, max_levels


@dataclass
class NrResult:
    map: np.ndarray
    mean_distortion: float
    o_score: float
    model_id: str
    stride: int = 1

    def record(self, path: str) -> dict:
        """JSON-lines report record."""
        return {"path": str(path), "model_id": self.model_id,
                "mean_distortion": self.mean_distortion, "o_score": self.o_score,
                "stride": self.stride}


def report_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def model_config(model: ForestModel) -> dict:
    m = model.meta
    return {"levels": int(m.get("levels", 0)), "filter": m.get("filter", "haar"),
            "window": int(m.get("window", 3)), "n_features": model.n_features}


def check_compatible(img: ColorImage, model: ForestModel) -> None:
    """Refuse images or models the descriptor layout cannot serve."""
    cfg = model_config(model)
    L = cfg["levels"]
    image_cfg = {"shape": list(img.shape), "max_levels": max_levels(img.shape),
                 "n_features": descriptor_size(L) if L >= 1 else None}
    problems = []
    if L < 1:
        problems.append("model does not record its decomposition depth")
    elif L > image_cfg["max_levels"]:
        problems.append(f"image supports at most {image_cfg['max_levels']} levels, model needs {L}")
    if L >= 1 and cfg["n_features"] != descriptor_size(L):
        problems.append(f"model has {cfg['n_features']} features, "
                        f"descriptors at {L} levels have {descriptor_size(L)}")
    if problems:
        raise ConfigMismatchError("; ".join(problems)
                                  + f"\n  model: {json.dumps(cfg, sort_keys=True)}"
                                  + f"\n  image: {json.dumps(image_cfg, sort_keys=True)}")


def grid_descriptors(img: ColorImage, model: ForestModel, stride: int = 2) -> np.ndarray:
    """Descriptors of the pixels on the ``stride`` grid, shape ``(gh, gw, F)``."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    check_compatible(img, model)
    cfg = model_config(model)
    pyr = dwt2(img.y, cfg["levels"], cfg["filter"])
    return describe_image(img, pyr, cfg["window"])[::stride, ::stride]


def upsample(grid: np.ndarray, shape, stride: int) -> np.ndarray:
    """Replicate each grid sample over the ``stride`` x ``stride`` block it anchors."""
    if stride == 1:
        return grid
    out = np.repeat(np.repeat(grid, stride, axis=0), stride, axis=1)
    return np.ascontiguousarray(out[:shape[0], :shape[1]])


def nr_assess(img: ColorImage, model: ForestModel, stride: int = 2,
              model_id: Optional[str] = None) -> NrResult:
    """Predicted distortion map and score of ``img`` without its reference."""
    desc = grid_descriptors(img, model, stride)
    gh, gw, F = desc.shape
    grid = model.predict(desc.reshape(-1, F)).reshape(gh, gw)
    dmap = upsample(grid, img.shape, stride)
    mean, q = pool(dmap)
    return NrResult(dmap, mean, q, model_id or compute_model_id(model), stride)


def image_histogram(img: ColorImage, model: ForestModel, stride: int = 2):
    from .kernel import leaf_histogram

    desc = grid_descriptors(img, model, stride)
    return leaf_histogram(model, desc.reshape(-1, desc.shape[-1]))


def nr_assess_kernel(img: ColorImage, forest: ForestModel, scorer: KernelModel, stride: int = 2,
                     model_id: Optional[str] = None) -> float:
    """Image score from the forest-kernel scorer, clamped to (0, 1]."""
    fid = model_id or compute_model_id(forest)
    if fid != scorer.forest_id:
        raise ConfigMismatchError(
            f"kernel scorer belongs to forest {scorer.forest_id[:12]}, not {fid[:12]}")
    desc = grid_descriptors(img, forest, stride)
    return kernel_score(scorer, forest, desc.reshape(-1, desc.shape[-1]), forest_id=fid)
