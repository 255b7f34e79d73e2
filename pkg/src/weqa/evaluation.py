"""Correlation statistics, map comparison and corpus-level evaluation reports."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .descriptors import FrConfig
from .errors import UndefinedCorrelationError, WeqaError
from .forest import ForestModel
from .fr import ssim_assess, weqa_assess
from .imgio import DatasetManifest, load_image

MIN_N = 3


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < MIN_N:
        raise ValueError(f"need at least {MIN_N} samples, got {x.size}")
    return x, y


def _pearson(x, y) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def plcc(x, y) -> float:
    """Pearson linear correlation."""
    return _pearson(*_pair(x, y))


def srocc(x, y) -> float:
    """Spearman rank-order correlation (Pearson of average ranks)."""
    x, y = _pair(x, y)
    return _pearson(stats.rankdata(x), stats.rankdata(y))


def logistic3(x, a, b, c):
    return a + b * (0.5 * (1.0 + np.tanh(0.5 * c * x)))


def fit_logistic(x, y) -> tuple[np.ndarray, float, float]:
    """Least-squares monotone logistic ``a + b / (1 + exp(-c z))`` on standardised ``z``.

    Returns the parameters and the (mean, std) used to standardise ``x``.
    """
    x, y = _pair(x, y)
    mu, sd = x.mean(), x.std()
    if sd == 0.0 or y.std() == 0.0:
        raise UndefinedCorrelationError("logistic fit undefined: zero variance")
    z = (x - mu) / sd
    # start from a wide curve whose central slope matches the least-squares line
    span = float(y.max() - y.min())
    slope = float(np.mean(z * (y - y.mean())))
    b = 3.0 * span * (1.0 if slope >= 0 else -1.0)
    p0 = np.array([float(y.mean()) - b / 2, b, 4.0 * slope / b])
    res = optimize.least_squares(lambda q: logistic3(z, *q) - y, p0, method="lm", max_nfev=20000)
    p = res.x
    return p, mu, sd


def rmse_after_fit(x, y) -> float:
    x, y = _pair(x, y)
    p, mu, sd = fit_logistic(x, y)
    r = y - logistic3((x - mu) / sd, *p)
    return float(np.sqrt(np.mean(r * r)))


@dataclass
class MapComparison:
    mae: float
    _pearson: Optional[float] = None

    @property
    def pearson(self) -> float:
        if self._pearson is None:
            raise UndefinedCorrelationError("map correlation undefined: a map is constant")
        return self._pearson

    @property
    def has_pearson(self) -> bool:
        return self._pearson is not None


def map_compare(a, b) -> MapComparison:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {a.shape} vs {b.shape}")
    mae = float(np.mean(np.abs(a - b)))
    try:
        r = _pearson(a.ravel(), b.ravel())
    except UndefinedCorrelationError:
        r = None
    return MapComparison(mae, r)


# ---------------------------------------------------------------------------
# corpus evaluation


@dataclass
class Correlation:
    n: int
    srocc: Optional[float] = None
    plcc: Optional[float] = None
    rmse: Optional[float] = None
    note: Optional[str] = None


def correlate(x, y, fit: bool = False) -> Correlation:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = int(x.size)
    if n < MIN_N:
        return Correlation(n, note=f"suppressed: n < {MIN_N}")
    try:
        out = Correlation(n, srocc(x, y), plcc(x, y))
        if fit:
            out.rmse = rmse_after_fit(x, y)
        return out
    except UndefinedCorrelationError as exc:
        return Correlation(n, note=str(exc))


@dataclass
class EntryResult:
    index: int
    dist_path: str
    distortion_type: str
    level: int
    mos: Optional[float]
    fr_mean_distortion: float
    fr_o_score: float
    mean_ssim: float
    weqa_ssim_map_pearson: Optional[float]
    nr_mean_distortion: Optional[float] = None
    nr_o_score: Optional[float] = None
    nr_map_pearson: Optional[float] = None
    nr_map_mae: Optional[float] = None


def _evaluate_entry(args):
    index, manifest, entry, model, model_id, fr_config, stride = args
    from .nr import nr_assess

    try:
        ref = load_image(manifest.resolve(entry.ref_path))
        dist = load_image(manifest.resolve(entry.dist_path))
        levels = fr_config.levels_for(dist.shape)
        fr = weqa_assess(ref, dist, levels, fr_config.filter, fr_config.g_sigma)
        ss = ssim_assess(ref, dist)
        cmp_ssim = map_compare(fr.map, ss.distortion_map)
        res = EntryResult(index, entry.dist_path, entry.distortion_type, entry.level, entry.mos,
                          fr.mean_distortion, fr.o_score, ss.mean_ssim,
                          cmp_ssim._pearson)
        if model is not None:
            # the reference is not passed on: the blind path only sees ``dist``
            nr = nr_assess(dist, model, stride, model_id)
            cmp = map_compare(nr.map, fr.map)
            res.nr_mean_distortion = nr.mean_distortion
            res.nr_o_score = nr.o_score
            res.nr_map_pearson = cmp._pearson
            res.nr_map_mae = cmp.mae
        return res
    except (WeqaError, OSError, ValueError) as exc:
        return {"index": index, "dist_path": entry.dist_path, "error": f"{type(exc).__name__}: {exc}"}


def _mean_defined(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _summarise(rows: list, with_nr: bool) -> dict:
    level = [r.level for r in rows]
    q = [r.fr_o_score for r in rows]
    block = {
        "n": len(rows),
        "fr_q_vs_level": asdict(correlate(q, level)),
        "ssim_vs_level": asdict(correlate([r.mean_ssim for r in rows], level)),
        "weqa_vs_ssim_map_pearson": _mean_defined(r.weqa_ssim_map_pearson for r in rows),
    }
    mos_rows = [r for r in rows if r.mos is not None]
    if mos_rows:
        block["fr_q_vs_mos"] = asdict(correlate([r.fr_o_score for r in mos_rows],
                                                [r.mos for r in mos_rows]))
    if with_nr:
        nq = [r.nr_o_score for r in rows]
        block["nr_q_vs_fr_q"] = asdict(correlate(nq, q, fit=True))
        block["nr_q_vs_level"] = asdict(correlate(nq, level))
        block["nr_map_pearson_mean"] = _mean_defined(r.nr_map_pearson for r in rows)
        block["nr_map_mae_mean"] = _mean_defined(r.nr_map_mae for r in rows)
        if mos_rows:
            block["nr_q_vs_mos"] = asdict(correlate([r.nr_o_score for r in mos_rows],
                                                    [r.mos for r in mos_rows]))
    return block


@dataclass
class CorpusReport:
    config: dict
    per_type: dict
    overall: dict
    entries: list
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config": self.config, "per_type": self.per_type, "overall": self.overall,
                "entries": [asdict(e) for e in self.entries], "failures": self.failures}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        """Aligned plain-text summary, one row per distortion type plus overall."""
        cols = [("fr_q_vs_level", "FR-Q/level"), ("ssim_vs_level", "SSIM/level"),
                ("nr_q_vs_fr_q", "NR-Q/FR-Q"), ("nr_q_vs_level", "NR-Q/level")]
        cols = [c for c in cols if c[0] in self.overall]
        head = ["group", "n"] + [f"{label} {k}" for _, label in cols for k in ("srocc", "plcc")]
        if "nr_map_pearson_mean" in self.overall:
            head.append("map r")
        rows = []
        for name, block in list(self.per_type.items()) + [("overall", self.overall)]:
            row = [name, str(block["n"])]
            for key, _ in cols:
                c = block[key]
                row += [_fmt(c["srocc"]), _fmt(c["plcc"])]
            if "nr_map_pearson_mean" in block:
                row.append(_fmt(block["nr_map_pearson_mean"]))
            rows.append(row)
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + rows]
        if self.failures:
            lines.append(f"{len(self.failures)} entries failed")
        return "\n".join(lines)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def evaluate_corpus(manifest: DatasetManifest, model: Optional[ForestModel] = None,
                    fr_config: FrConfig = FrConfig(), stride: int = 1, jobs: int = 1,
                    config_echo: Optional[dict] = None) -> CorpusReport:
    """FR (and, with a model, NR) statistics per distortion type and overall.

    Entries that fail are listed under ``failures``; the rest are still scored.
    """
    from .modelio import model_id as compute_model_id

    mid = compute_model_id(model) if model is not None else None
    tasks = [(i, manifest, e, model, mid, fr_config, stride) for i, e in enumerate(manifest.entries)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_entry, tasks))
    else:
        results = [_evaluate_entry(t) for t in tasks]
    rows = [r for r in results if isinstance(r, EntryResult)]
    failures = [r for r in results if isinstance(r, dict)]
    with_nr = model is not None
    per_type = {}
    for kind in sorted({r.distortion_type for r in rows}):
        per_type[kind] = _summarise([r for r in rows if r.distortion_type == kind], with_nr)
    config = dict(config_echo or {})
    config.setdefault("fr", {"levels": fr_config.levels, "filter": fr_config.filter,
                             "g_sigma": fr_config.g_sigma})
    if with_nr:
        config.setdefault("model_id", mid)
        config.setdefault("stride", stride)
    return CorpusReport(config, per_type, _summarise(rows, with_nr), rows, failures)
