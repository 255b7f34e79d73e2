"""Run configuration shared by the command-line tools.

Values are resolved with the precedence: command-line flag, then the JSON
config file given with ``--config``, then the built-in defaults. The
``IQA_SEED`` environment variable replaces the default seed.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Optional

from .descriptors import FrConfig, SamplingPolicy
from .descriptors import _check_window as check_window
from .forest import ForestConfig
from .wavelet import FILTERS


class ConfigError(ValueError):
    pass


@dataclass
class WaveletSection:
    filter: str = "haar"
    levels: Optional[int] = None


@dataclass
class FrSection:
    g_sigma: float = 1.0


@dataclass
class SamplingSection:
    per_image: int = 2000
    strata: int = 4
    window: int = 3


@dataclass
class ForestSection:
    n_trees: int = 100
    k_candidates: Optional[int] = None
    min_leaf: int = 5
    max_depth: int = 20


@dataclass
class KernelSection:
    lam: float = 1.0


@dataclass
class RunConfig:
    wavelet: WaveletSection = field(default_factory=WaveletSection)
    fr: FrSection = field(default_factory=FrSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    forest: ForestSection = field(default_factory=ForestSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    seed: int = 0
    stride: int = 2
    map_format: str = "png"

    def validate(self) -> "RunConfig":
        if self.wavelet.filter not in FILTERS:
            raise ConfigError(f"unknown wavelet filter {self.wavelet.filter!r}")
        if self.wavelet.levels is not None and self.wavelet.levels < 1:
            raise ConfigError("wavelet.levels must be >= 1")
        if not self.fr.g_sigma > 0:
            raise ConfigError("fr.g_sigma must be > 0")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.map_format not in ("png", "pgm", "raw"):
            raise ConfigError(f"unknown map_format {self.map_format!r}")
        if not self.kernel.lam > 0:
            raise ConfigError("kernel.lam must be > 0")
        try:
            self.sampling_policy()
            self.forest_config()
            check_window(self.sampling.window)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def fr_config(self) -> FrConfig:
        return FrConfig(self.wavelet.levels, self.wavelet.filter, self.fr.g_sigma, self.sampling.window)

    def sampling_policy(self) -> SamplingPolicy:
        return SamplingPolicy(self.sampling.per_image, self.sampling.strata, self.seed)

    def forest_config(self) -> ForestConfig:
        f = self.forest
        return ForestConfig(f.n_trees, f.k_candidates, f.min_leaf, f.max_depth, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _merge(obj, data: dict, where: str):
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {where}{key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where}{key!r} must be an object")
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def default_seed() -> int:
    env = os.environ.get("IQA_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise ConfigError(f"IQA_SEED must be an integer, got {env!r}") from None


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``.

    ``overrides`` uses dotted keys (``"forest.n_trees"``); ``None`` values are
    treated as "not given".
    """
    cfg = RunConfig(seed=default_seed())
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, data, "")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = cfg
        for p in parents:
            node = getattr(node, p)
        setattr(node, leaf, value)
    return cfg.validate()
