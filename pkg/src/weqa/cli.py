"""Command-line entry point: ``weqa <command> ...``.

Exit status is 0 on success, 1 when the input or configuration is rejected
and 2 when a run fails part-way (unreadable files, corrupt models).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .errors import (ConfigMismatchError, DimensionMismatchError, LevelsError, ManifestError,
                     WeqaError)
from .imgio import DISTORTIONS, atomic_write_bytes

log = logging.getLogger("weqa")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    """Bad flags or a refused operation; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list:
    return [v for v in text.split(",") if v]


def _claim(path, force: bool) -> Path:
    """Refuse to replace an existing output unless ``--force`` was given."""
    path = Path(path)
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    return path


def _write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration (flags take precedence)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_wavelet(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", type=int, help="decomposition depth (default: by image size)")
    p.add_argument("--filter", choices=("haar", "db2"))
    p.add_argument("--g-sigma", type=float, help="width of the coupling Gaussian")


def _add_jobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: all cores)")


def _jobs(args) -> int:
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return jobs


def _config(args, **extra) -> RunConfig:
    overrides = {
        "wavelet.levels": getattr(args, "levels", None),
        "wavelet.filter": getattr(args, "filter", None),
        "fr.g_sigma": getattr(args, "g_sigma", None),
        "seed": getattr(args, "seed", None),
        "stride": getattr(args, "stride", None),
    }
    overrides.update(extra)
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_fr(args) -> int:
    from .fr import ssim_assess, weqa_assess
    from .imgio import load_image
    from .maps import write_map

    cfg = _config(args)
    outputs = [p for p in (args.map_out, args.ssim_map_out, args.report) if p]
    for p in outputs:
        _claim(p, args.force)
    ref, dist = load_image(args.ref), load_image(args.dist)
    levels = cfg.fr_config().levels_for(ref.shape)
    fr = weqa_assess(ref, dist, levels, cfg.wavelet.filter, cfg.fr.g_sigma)
    ss = ssim_assess(ref, dist)
    report = {
        "command": "fr",
        "config": {"wavelet": {"filter": cfg.wavelet.filter, "levels": levels},
                   "fr": {"g_sigma": cfg.fr.g_sigma}},
        "ref": args.ref, "dist": args.dist,
        "weqa": {"mean_distortion": fr.mean_distortion, "o_score": fr.o_score},
        "ssim": {"mean_ssim": ss.mean_ssim},
    }
    if args.map_out:
        report["weqa"]["map"] = {"path": args.map_out, **write_map(fr.map, args.map_out)}
    if args.ssim_map_out:
        report["ssim"]["map"] = {"path": args.ssim_map_out,
                                 **write_map(ss.distortion_map, args.ssim_map_out)}
    if args.report:
        _write_json(args.report, report)
    print(f"WEQA  mean distortion {fr.mean_distortion:.6g}  o_score {fr.o_score:.6f}")
    print(f"SSIM  mean {ss.mean_ssim:.6f}")
    return EXIT_OK


def cmd_distort(args) -> int:
    from .imgio import apply_distortion, load_image, save_image

    cfg = _config(args)
    _claim(args.out, args.force)
    img = load_image(args.ref)
    out = apply_distortion(img, args.type, args.level, cfg.seed)
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_ref_dir(directory) -> dict:
    from .imgio import load_image

    files = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".png", ".pgm", ".ppm"))
    if not files:
        raise UsageError(f"no PNG/PGM/PPM images in {directory}")
    return {p.stem: load_image(p) for p in files}


def cmd_corpus(args) -> int:
    from .corpus import build_corpus, reference_set

    cfg = _config(args)
    out = Path(args.out)
    manifest = Path(args.manifest) if args.manifest else out / "manifest.csv"
    _claim(manifest, args.force)
    if (out / "dist").exists() and not args.force:
        raise UsageError(f"{out / 'dist'} exists; pass --force to overwrite")
    for t in args.types:
        if t not in DISTORTIONS:
            raise UsageError(f"unknown distortion type {t!r}; choose from {', '.join(DISTORTIONS)}")
    for lv in args.dist_levels:
        if not 1 <= lv <= 5:
            raise UsageError(f"levels must lie in 1..5, got {lv}")
    if args.refs:
        refs = _load_ref_dir(args.refs)
    else:
        refs = reference_set(args.textures, args.photos or (), args.size, cfg.seed)
    m = build_corpus(refs, out, args.types, args.dist_levels, cfg.seed, manifest)
    print(f"{len(refs)} references, {len(m)} distorted images -> {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .descriptors import sample_training_set, write_training_set
    from .forest import train_forest
    from .imgio import read_manifest
    from .modelio import model_bytes, model_id

    cfg = _config(args, **{
        "sampling.per_image": args.per_image, "sampling.strata": args.strata,
        "sampling.window": args.window, "forest.n_trees": args.n_trees,
        "forest.k_candidates": args.k_candidates, "forest.min_leaf": args.min_leaf,
        "forest.max_depth": args.max_depth, "kernel.lam": args.lam,
    })
    jobs = _jobs(args)
    for p in (args.model_out, args.kernel_scorer, args.dataset_out, args.report):
        if p:
            _claim(p, args.force)
    manifest = read_manifest(args.manifest)
    if args.type == "all":
        log.warning("pooled training over all distortion types is experimental")
        subset = manifest
    elif args.type in DISTORTIONS:
        subset = manifest.filter(distortion_type=args.type)
    else:
        raise UsageError(f"unknown distortion type {args.type!r}")
    if len(subset) == 0:
        raise UsageError(f"manifest has no {args.type} entries")

    fr_config = cfg.fr_config()
    ts = sample_training_set(subset, cfg.sampling_policy(), fr_config, jobs=jobs)
    meta = dict(ts.meta, distortion_type=args.type)
    model = train_forest(ts.X, ts.y, cfg.forest_config(), meta, jobs=jobs)
    data = model_bytes(model)
    atomic_write_bytes(args.model_out, data)
    mid = model_id(model)
    if args.dataset_out:
        write_training_set(ts, args.dataset_out)
    report = {"command": "train", "config": cfg.to_dict(), "manifest": args.manifest,
              "distortion_type": args.type, "model": args.model_out, "model_id": mid,
              "n_samples": len(ts), "n_entries": len(subset), "n_features": ts.n_features,
              "levels": ts.meta["levels"], "edges": ts.meta["edges"]}
    if args.kernel_scorer:
        from .kernel import save_kernel_model
        report["kernel_scorer"] = {"path": args.kernel_scorer,
                                   "id": save_kernel_model(_fit_scorer(subset, model, mid, cfg),
                                                           args.kernel_scorer),
                                   "lam": cfg.kernel.lam, "stride": cfg.stride}
    if args.report:
        _write_json(args.report, report)
    print(f"trained {model.config.n_trees} trees on {len(ts)} samples "
          f"({ts.n_features} features) -> {args.model_out}  [{mid[:12]}]")
    return EXIT_OK


def _fit_scorer(manifest, model, mid, cfg: RunConfig):
    from .fr import weqa_assess
    from .imgio import load_image
    from .kernel import train_kernel_scorer
    from .nr import image_histogram

    fr_config = cfg.fr_config()
    hists, targets = [], []
    for e in manifest.entries:
        ref = load_image(manifest.resolve(e.ref_path))
        dist = load_image(manifest.resolve(e.dist_path))
        fr = weqa_assess(ref, dist, fr_config.levels_for(dist.shape), fr_config.filter,
                         fr_config.g_sigma)
        hists.append(image_histogram(dist, model, cfg.stride))
        targets.append(fr.o_score)
    return train_kernel_scorer(model, hists, targets, cfg.kernel.lam, forest_id=mid)


def cmd_nr(args) -> int:
    from .imgio import load_image
    from .maps import write_map
    from .modelio import load_model, model_id
    from .nr import nr_assess, nr_assess_kernel, report_line

    cfg = _config(args)
    dists = list(args.dist)
    map_paths = []
    if args.map_out:
        if len(dists) == 1:
            map_paths = [Path(args.map_out)]
        else:
            ext = ".png" if cfg.map_format == "png" else "." + cfg.map_format
            map_paths = [Path(args.map_out) / (Path(d).stem + "_nrmap" + ext) for d in dists]
    for p in map_paths + ([args.report] if args.report else []):
        _claim(p, args.force)
    model = load_model(args.model)
    mid = model_id(model)
    scorer = None
    if args.kernel_scorer:
        from .kernel import load_kernel_model
        scorer = load_kernel_model(args.kernel_scorer)
    lines = []
    for i, d in enumerate(dists):
        img = load_image(d)
        res = nr_assess(img, model, cfg.stride, mid)
        rec = res.record(d)
        rec["config"] = {"levels": model.meta.get("levels"), "filter": model.meta.get("filter"),
                         "window": model.meta.get("window")}
        if scorer is not None:
            rec["kernel_o_score"] = nr_assess_kernel(img, model, scorer, cfg.stride, mid)
        if map_paths:
            rec["map"] = {"path": str(map_paths[i]), **write_map(res.map, map_paths[i])}
        lines.append(report_line(rec))
        print(f"{d}  mean distortion {res.mean_distortion:.6g}  o_score {res.o_score:.6f}")
    if args.report:
        atomic_write_bytes(args.report, ("\n".join(lines) + "\n").encode("utf-8"))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_corpus
    from .imgio import read_manifest
    from .modelio import load_model

    cfg = _config(args)
    if args.report_out:
        _claim(args.report_out, args.force)
    manifest = read_manifest(args.manifest, check_files=False)
    if args.type:
        manifest = manifest.filter(distortion_type=args.type)
    model = load_model(args.model) if args.model else None
    echo = {"manifest": args.manifest, "model": args.model, "type": args.type,
            "wavelet": {"filter": cfg.wavelet.filter, "levels": cfg.wavelet.levels},
            "fr": {"g_sigma": cfg.fr.g_sigma}}
    if model is not None:
        echo["stride"] = cfg.stride
    report = evaluate_corpus(manifest, model, cfg.fr_config(), cfg.stride, _jobs(args), echo)
    if args.report_out:
        atomic_write_bytes(args.report_out, report.to_json().encode("utf-8"))
    print(report.table())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weqa", description="Wavelet-domain image quality assessment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fr", help="full-reference assessment of one image pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--map-out", help="WEQA map (.png/.pgm image, anything else raw float)")
    p.add_argument("--ssim-map-out", help="1 - SSIM map")
    p.add_argument("--report", help="JSON report")
    _add_wavelet(p)
    _add_common(p)
    p.set_defaults(func=cmd_fr)

    p = sub.add_parser("distort", help="apply one synthetic distortion")
    p.add_argument("--ref", required=True)
    p.add_argument("--type", required=True, choices=DISTORTIONS)
    p.add_argument("--level", required=True, type=int, choices=range(1, 6))
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("corpus", help="build a distorted corpus and its manifest")
    p.add_argument("--refs", help="directory of reference images (default: generated)")
    p.add_argument("--textures", type=int, default=10, help="procedural references when --refs is absent")
    p.add_argument("--photos", type=_str_list, help="scikit-image sample photos to add")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--types", type=_str_list, default=["gaussian_noise"])
    p.add_argument("--levels", dest="dist_levels", type=_int_list, default=[1, 2, 3, 4, 5],
                   help="severity levels to generate")
    p.add_argument("--seed", type=lambda s: int(s, 0))
    _add_common(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train", help="learn a forest from full-reference maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--type", required=True, help="distortion type, or 'all' (experimental)")
    p.add_argument("--model-out", required=True)
    p.add_argument("--kernel-scorer", help="also fit the image-level kernel scorer")
    p.add_argument("--lam", type=float, help="kernel scorer regularisation")
    p.add_argument("--dataset-out", help="export the sampled training set")
    p.add_argument("--report", help="JSON training report")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--k-candidates", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--per-image", type=int)
    p.add_argument("--strata", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int, help="grid stride for the kernel scorer signatures")
    p.add_argument("--seed", type=lambda s: int(s, 0))
    _add_wavelet(p)
    _add_jobs(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("nr", help="blind assessment with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dist", required=True, nargs="+")
    p.add_argument("--map-out", help="map file, or a directory when several images are given")
    p.add_argument("--report", help="JSON-lines report")
    p.add_argument("--stride", type=int)
    p.add_argument("--kernel-scorer")
    _add_common(p)
    p.set_defaults(func=cmd_nr)

    p = sub.add_parser("eval", help="correlation report over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model")
    p.add_argument("--type", choices=DISTORTIONS)
    p.add_argument("--report-out")
    p.add_argument("--stride", type=int)
    _add_wavelet(p)
    _add_jobs(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ConfigMismatchError, ManifestError, DimensionMismatchError,
            LevelsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (WeqaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
