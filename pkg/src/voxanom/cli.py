"""Command-line entry point.

Subcommands mirror the pipeline stages:

    voxanom build-shapes     pre-generate the brush-shape library
    voxanom synthesize       corrupt source volumes into training pairs
    voxanom make-validation  build the held-out anomaly set
    voxanom score            baseline-score cases, or fuse window scores
    voxanom evaluate         pixel- or sample-wise average precision

Every command is deterministic from (config, seed) and independent of
the worker count. Exit codes: 0 success, 1 config/usage error, 2
runtime or I/O failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PathsConfig, load_config
from .corruption import SHAPE_FAMILIES, GenerationConfig, emit_dataset
from .errors import ConfigError, VoxanomError
from .evaluation import (evaluate_pixelwise, evaluate_samplewise, save_report,
                         Subsample)
from .scoring import baseline_gradient_scorer, fuse_scores, read_window_scores
from .shapes import (build_shape_library, default_brush_grid,
                     load_shape_library, save_shape_library)
from .validation import VALIDATION_FAMILIES, build_validation_set
from .volume import read_volume, write_volume


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for
    # runtime failures and 1 for validation problems
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dataclass_replace(obj, **overrides):
    import dataclasses
    live = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(obj, **live) if live else obj


def _resolve(flag_value, config_value, default=None, name=""):
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    if default is not None:
        return default
    raise ConfigError(f"missing required path: pass --{name} or set paths.{name} in the config")


def _list_volumes(volumes_dir) -> list[Path]:
    root = Path(volumes_dir)
    if root.is_file():
        return [root]
    found = sorted(root.glob("*.rvol"))
    if not found:
        raise ConfigError(f"no .rvol volumes found in {root}")
    return found


def _parse_families(text):
    if text is None:
        return None
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    if names == ("complex",):
        return SHAPE_FAMILIES
    for n in names:
        if n not in SHAPE_FAMILIES:
            raise ConfigError(
                f"unknown shape family {n!r}; choose from {SHAPE_FAMILIES} or 'complex'")
    if not names:
        raise ConfigError("empty family list")
    return names


def cmd_build_shapes(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    shapes_cfg = _dataclass_replace(cfg.shapes, count=args.count,
                                    canvas_dims=tuple([args.canvas] * 3) if args.canvas else None)
    out = Path(_resolve(args.out, cfg.paths.out, "shape_library"))
    grid = default_brush_grid(shapes_cfg.canvas_dims, shapes_cfg.steps,
                              shapes_cfg.radii, shapes_cfg.sigmas)
    library = build_shape_library(shapes_cfg.count, grid, seed)
    save_shape_library(library, out)
    voxels = np.array([int(s.sum()) for s in library.shapes])
    hist, edges = np.histogram(voxels, bins=8)
    print(f"built {len(library)} shapes on {'x'.join(map(str, library.canvas_dims))} "
          f"canvas -> {out}")
    print(f"voxel counts: min={voxels.min()} median={int(np.median(voxels))} "
          f"max={voxels.max()}")
    for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
        print(f"  [{lo:9.0f}, {hi:9.0f}): {count}")
    return 0


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    workers = args.workers if args.workers is not None else cfg.workers
    count = args.count if args.count is not None else cfg.count_per_volume
    gen = _dataclass_replace(cfg.generation, mode=args.mode,
                             families=_parse_families(args.shapes),
                             patch_dims=tuple([args.patch] * 3) if args.patch else None)
    volumes = _list_volumes(_resolve(args.volumes, cfg.paths.volumes, name="volumes"))
    out = Path(_resolve(args.out, cfg.paths.out, "dataset"))
    library = None
    if "brush" in gen.families:
        lib_dir = _resolve(args.library, cfg.paths.library, name="library")
        library = load_shape_library(lib_dir)
        if library.canvas_dims != gen.patch_dims:
            raise ConfigError(
                f"shape library canvas {library.canvas_dims} does not match "
                f"patch dims {gen.patch_dims}; rebuild with matching --canvas")
    result = emit_dataset(volumes, gen, out, count, seed, library=library,
                          workers=workers)
    print(f"wrote {len(result['entries'])} sample pair(s) -> {out}")
    if result["errors"]:
        print(f"{len(result['errors'])} source(s) failed; see {out / 'errors.json'}",
              file=sys.stderr)
        return 2
    return 0


def cmd_make_validation(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    workers = args.workers if args.workers is not None else cfg.workers
    spec = cfg.validation.to_spec(seed)
    if args.families:
        keep = tuple(t.strip() for t in args.families.split(",") if t.strip())
        for fam in keep:
            if fam not in VALIDATION_FAMILIES:
                raise ConfigError(f"unknown validation family {fam!r}")
        counts = {f: (spec.counts[f] if f in keep else 0) for f in VALIDATION_FAMILIES}
        spec = type(spec)(counts, seed, spec.region_size_range)
    volumes = _list_volumes(_resolve(args.volumes, cfg.paths.volumes, name="volumes"))
    out = Path(_resolve(args.out, cfg.paths.out, "validation"))
    entries = build_validation_set(volumes, spec, out, workers=workers)
    by_family: dict = {}
    for e in entries:
        by_family[e["family"]] = by_family.get(e["family"], 0) + 1
    print(f"wrote {len(entries)} case(s) -> {out}")
    for fam in VALIDATION_FAMILIES:
        if fam in by_family:
            print(f"  {fam}: {by_family[fam]}")
    return 0


def cmd_score(args) -> int:
    cfg = load_config(args.config)
    out = Path(_resolve(args.out, cfg.paths.scores, "scores"))
    if args.fuse:
        pairs, volume_dims = read_window_scores(args.fuse)
        fused = fuse_scores(pairs, cfg.fusion, volume_dims)
        out.mkdir(parents=True, exist_ok=True)
        target = out / "fused_score.rvol"
        write_volume(fused, target)
        print(f"fused {len(pairs)} window(s) -> {target}")
        return 0
    manifest_path = Path(_resolve(args.manifest, cfg.paths.manifest, name="manifest"))
    if manifest_path.is_dir():
        manifest_path = manifest_path / "validation_manifest.json"
    entries = json.loads(manifest_path.read_text())
    out.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        vol = read_volume(manifest_path.parent / entry["image_path"])
        score = baseline_gradient_scorer(vol)
        write_volume(score, out / (Path(entry["image_path"]).stem + "_score.rvol"))
    print(f"scored {len(entries)} case(s) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    task = args.task or cfg.evaluation.task
    subset = args.subset or cfg.evaluation.subset
    manifest = Path(_resolve(args.manifest, cfg.paths.manifest, name="manifest"))
    scores = Path(_resolve(args.scores, cfg.paths.scores, name="scores"))
    subsample = None
    if cfg.evaluation.subsample is not None:
        subsample = Subsample(cfg.evaluation.subsample, cfg.evaluation.subsample_seed)
    if task == "pixel":
        report = evaluate_pixelwise(manifest, scores, subset=subset, subsample=subsample)
    else:
        report = evaluate_samplewise(manifest, scores, subset=subset,
                                     top_k=cfg.evaluation.top_k)
    out = Path(args.out) if args.out else Path("eval_report.json")
    save_report(report, out)
    print(f"{task} AP ({subset}, n={report.n_cases}): {report.ap_overall:.4f}")
    for fam, ap in sorted(report.ap_by_family.items()):
        print(f"  {fam}: {ap:.4f}")
    print(f"report -> {out}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="path to a run-config JSON file")
    p.add_argument("--seed", type=int, help="root rng seed (overrides config)")
    p.add_argument("--workers", type=int, help="worker threads (overrides config)")
    p.add_argument("--out", help="output location")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxanom",
                     description="synthetic 3D anomaly generation and evaluation")
    parser.add_argument("--version", action="version", version=f"voxanom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-shapes", help="pre-generate the brush-shape library")
    _add_common(p)
    p.add_argument("--count", type=int, help="number of shapes")
    p.add_argument("--canvas", type=int, help="cubic canvas edge length")
    p.set_defaults(func=cmd_build_shapes)

    p = sub.add_parser("synthesize", help="corrupt source volumes into training pairs")
    _add_common(p)
    p.add_argument("--volumes", help="directory of source .rvol volumes")
    p.add_argument("--library", help="brush-shape library directory")
    p.add_argument("--count", type=int, help="samples per source volume")
    p.add_argument("--mode", choices=("hard", "smoothed", "mixed"),
                   help="mask edge treatment")
    p.add_argument("--shapes", help="shape families: complex or a comma list "
                                    "of cuboid,sphere,brush")
    p.add_argument("--patch", type=int, help="cubic anomaly patch edge length")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("make-validation", help="build the held-out anomaly set")
    _add_common(p)
    p.add_argument("--volumes", help="directory of held-out .rvol volumes")
    p.add_argument("--families", help="comma list restricting families")
    p.set_defaults(func=cmd_make_validation)

    p = sub.add_parser("score", help="baseline-score cases or fuse window scores")
    _add_common(p)
    p.add_argument("--manifest", help="validation manifest (dir or json path)")
    p.add_argument("--fuse", help="directory of (window_*.json, window_*.rvol) pairs")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compute average precision")
    _add_common(p)
    p.add_argument("--manifest", help="validation manifest (dir or json path)")
    p.add_argument("--scores", help="directory of *_score.rvol maps")
    p.add_argument("--task", choices=("pixel", "sample"))
    p.add_argument("--subset", choices=("full", "baseline"))
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"voxanom: config error: {exc}", file=sys.stderr)
        return 1
    except VoxanomError as exc:
        print(f"voxanom: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"voxanom: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
