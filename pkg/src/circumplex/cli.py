"""Command-line entry point.

Every subcommand writes its outputs under ``--out-dir`` (default ``.``):

    analyze         report.json, category_counts.csv, value_hist_<dim>.csv, scatter.csv
    gen-synthetic   <split>.csv per split (manifest.csv for a single split)
    train           checkpoint.npz, runlog.json, checkpoints/epoch_NNN.npz
    evaluate        report.json, confusion.csv, cdf.csv
    cross-validate  report.json, cdf.csv

``--format`` picks how the result summary is printed on stdout: one JSON
object, or ``key,value`` CSV rows. On failure the process exits with status 2 and prints ``{"error": ...,
"message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .affect_core import PRESETS, get_space
from .data import SyntheticSpec, gen_synthetic, gen_synthetic_splits, load_manifest, save_manifest
from .errors import AffectError
from .harness import TrainConfig, cross_validate, evaluate, train
from .model import ModelCheckpoint


def _write(out_dir: Path, name: str, text: str) -> Path:
    path = out_dir / name
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _emit_report(report, out_dir: Path) -> list[Path]:
    written = [_write(out_dir, "report.json", report.to_json())]
    if report.confusion is not None:
        written.append(_write(out_dir, "confusion.csv", report.confusion_csv()))
    if report.cdf is not None:
        written.append(_write(out_dir, "cdf.csv", report.cdf_csv()))
    return written


def _manifest_space(path, space=None) -> str:
    if space:
        return space
    # peek at the header: a "labels" column means the multi-label preset
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return "emotic26" if "labels" in header else "affectnet8"


def cmd_analyze(args, out_dir: Path) -> dict:
    manifest = load_manifest(args.manifest, _manifest_space(args.manifest, args.space))
    space = manifest.space
    samples = manifest.samples
    report = analysis.distribution_report(samples, space, manifest.split)
    written = [_write(out_dir, "report.json", report.to_json())]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "count", "frequency", "per_image"])
    for c in space.categories:
        w.writerow([c, report.category_counts[c], repr(report.category_frequencies[c]), repr(report.per_image_frequencies[c])])
    written.append(_write(out_dir, "category_counts.csv", buf.getvalue()))
    for dim in space.continuous_dims:
        hist = analysis.value_histogram({manifest.split: samples}, dim, args.bins, space)
        written.append(_write(out_dir, f"value_hist_{dim}.csv", hist.to_csv()))
    if args.scatter_n:
        _, _, rows = analysis.va_statistics(samples, space, scatter_n=args.scatter_n,
                                            rng=np.random.default_rng(args.seed))
        written.append(_write(out_dir, "scatter.csv", analysis.scatter_csv(rows)))
    return {"written": [str(p) for p in written]}


def cmd_gen_synthetic(args, out_dir: Path) -> dict:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    splits = raw.pop("splits", None)
    spec = SyntheticSpec.from_dict(raw)
    if args.seed is not None:
        spec.seed = args.seed
    written = []
    if splits:
        for name, manifest in gen_synthetic_splits(spec, splits).items():
            written.append(save_manifest(manifest, out_dir / f"{name}.csv"))
    else:
        written.append(save_manifest(gen_synthetic(spec), out_dir / "manifest.csv"))
    return {"written": [str(p) for p in written]}


def cmd_train(args, out_dir: Path) -> dict:
    config = TrainConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    config.out_dir = str(out_dir)
    space = config.space or _manifest_space(config.train_manifest)
    config.space = space
    ckpt, log = train(config)
    return {"checkpoint": log.checkpoint_path, "best_epoch": log.best_epoch, "wall_time": log.wall_time}


def cmd_evaluate(args, out_dir: Path) -> dict:
    ckpt = ModelCheckpoint.load(args.checkpoint)
    space = args.space or ckpt.metadata.get("space")
    report = evaluate(ckpt, load_manifest(args.manifest, space))
    return {"written": [str(p) for p in _emit_report(report, out_dir)]}


def cmd_cross_validate(args, out_dir: Path) -> dict:
    ckpt = ModelCheckpoint.load(args.checkpoint)
    report = cross_validate(ckpt, load_manifest(args.manifest, _manifest_space(args.manifest, args.space)))
    return {"written": [str(p) for p in _emit_report(report, out_dir)]}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="circumplex", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="dataset distribution report")
    p.add_argument("manifest")
    p.add_argument("--space", choices=sorted(PRESETS))
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--scatter-n", type=int, default=0, help="rows to export for the valence/arousal scatter")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-synthetic", parents=[common], help="generate a synthetic manifest from a JSON spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", parents=[common], help="train from a JSON config")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--space")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-validate", parents=[common], help="valence/arousal evaluation across label spaces")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--space")
    p.set_defaults(func=cmd_cross_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "space", None):
            get_space(args.space)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result = args.func(args, out_dir)
    except (AffectError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc).strip("'\"")}), file=sys.stderr)
        return 2
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["key", "value"])
        for key, value in result.items():
            for v in value if isinstance(value, list) else [value]:
                w.writerow([key, v])
    else:
        print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
