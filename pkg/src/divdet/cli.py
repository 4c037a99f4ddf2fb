"""Command-line entry point.

Subcommands cover each pipeline stage individually plus a declarative
`run` mode that executes a JSON stage list under a run directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .curation import CurationConfig, curate
from .errors import DivdetError
from .evaluation import evaluate, evaluate_by_group
from .fusion import pair_manifests
from .head import TrainConfig, load_head, predict_proba_scores, save_head, train
from .imageops import load_image, save_png
from .manifest import LABEL_STRINGS, Manifest, read_manifest, write_manifest
from .perturb import PerturbSpec, apply_protocol, events_to_jsonl
from .spectrum import to_spectrum_image, write_spectrum_file

logger = logging.getLogger(__name__)


def _add_embed_toy(sub):
    p = sub.add_parser("embed-toy", help="embed a directory with the deterministic toy embedder")
    p.add_argument("--in", dest="images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--branch", choices=("pixel", "spectrum"), default="pixel")


def _cmd_embed_toy(args) -> int:
    m = pl.embed_directory(args.images, args.labels, args.dim, args.seed, args.branch)
    write_manifest(m, args.out)
    print(f"wrote {m.count} embeddings (dim {m.dimension}) to {args.out}")
    return 0


def _add_spectrum(sub):
    p = sub.add_parser("spectrum", help="convert images to spectrum files")
    p.add_argument("--in", dest="images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=224)


def _cmd_spectrum(args) -> int:
    in_dir, out_dir = Path(args.images), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in pl.IMAGE_SUFFIXES)
    if not files:
        print(f"error: no image files in {in_dir}", file=sys.stderr)
        return 1
    for p in files:
        spec = to_spectrum_image(load_image(p), args.resolution, source_id=p.stem)
        write_spectrum_file(spec, out_dir / (p.stem + pl.SPECTRUM_SUFFIX))
    print(f"wrote {len(files)} spectrum files to {out_dir}")
    return 0


def _add_dedup(sub):
    p = sub.add_parser("dedup", help="curate a manifest by similarity dedup and balancing")
    p.add_argument("--pixel", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance-tolerance", type=int, default=0)
    p.add_argument("--refine-floor", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)


def _cmd_dedup(args) -> int:
    manifest = read_manifest(args.pixel)
    cfg = CurationConfig(
        threshold=args.threshold,
        balance_tolerance=args.balance_tolerance,
        seed=args.seed,
        refine_floor=args.refine_floor,
    )
    curated, report = curate(manifest, cfg)
    write_manifest(curated, args.out)
    with open(args.report, "w", encoding="utf-8") as f:
        f.write(report.to_jsonl())
    print(
        f"curated {report.input_count} -> {report.final_count} records "
        f"({len(report.discards)} discards); report at {args.report}"
    )
    return 0


def _add_fuse(sub):
    p = sub.add_parser("fuse", help="join pixel and spectrum manifests into fused features")
    p.add_argument("--pixel", required=True)
    p.add_argument("--spectrum", required=True)
    p.add_argument("--out", required=True)


def _cmd_fuse(args) -> int:
    fused = pair_manifests(read_manifest(args.pixel), read_manifest(args.spectrum))
    m = Manifest.from_arrays(
        ids=[f.id for f in fused],
        labels=[f.label for f in fused],
        vectors=np.stack([f.vector for f in fused]),
        generators=[f.generator for f in fused],
        branch="fused",
        source_note="fused pixel+spectrum",
    )
    write_manifest(m, args.out)
    print(f"fused {m.count} records (width {m.dimension}) to {args.out}")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train the detection head on fused features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--sc-weight", type=float, default=0.1)
    p.add_argument("--sc-temperature", type=float, default=0.1)
    p.add_argument("--dropout-rate", type=float, default=0.2)
    p.add_argument("--leaky-slope", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden-dims", type=int, nargs=2, default=(256, 128))
    p.add_argument("--sc-features", choices=("fused", "hidden"), default="fused")


def _cmd_train(args) -> int:
    from .fusion import single_branch_features

    manifest = read_manifest(args.features)
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, sc_weight=args.sc_weight,
        sc_temperature=args.sc_temperature, dropout_rate=args.dropout_rate,
        leaky_slope=args.leaky_slope, seed=args.seed,
        hidden_dims=tuple(args.hidden_dims), sc_features=args.sc_features,
    )
    params, log = train(single_branch_features(manifest), cfg)
    save_head(params, cfg, args.out)
    with open(args.log, "w", encoding="utf-8") as f:
        for entry in log:
            f.write(entry.to_json() + "\n")
    print(f"trained {cfg.epochs} epochs; final total loss {log[-1].total:.6f}; "
          f"checkpoint at {args.out}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="score a feature manifest with a trained head")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--roc", required=True)
    p.add_argument("--by-generator")
    p.add_argument("--threshold", type=float, default=0.5)


def _cmd_eval(args) -> int:
    manifest = read_manifest(args.features)
    params, cfg = load_head(args.model)
    scores = predict_proba_scores(params, manifest.matrix(), cfg)
    labels = manifest.labels()
    report = evaluate(scores, labels, threshold=args.threshold)
    with open(args.report, "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    with open(args.roc, "w", encoding="utf-8") as f:
        f.write(report.roc_csv())
    if args.by_generator:
        groups = [r.generator for r in manifest.records]
        by = evaluate_by_group(scores, labels, groups)
        with open(args.by_generator, "w", encoding="utf-8") as f:
            json.dump({k: json.loads(v.to_json()) for k, v in by.items()},
                      f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"acc={report.acc:.4f} auc={report.auc:.4f} "
          f"ap={report.ap:.4f} eer={report.eer:.4f}")
    return 0


def _add_perturb(sub):
    p = sub.add_parser("perturb", help="apply the robustness perturbation protocol")
    p.add_argument("--in", dest="images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("gaussian", "jpeg", "both", "none"), default="both")
    p.add_argument("--phase", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--apply-fraction", type=float, default=0.5)
    p.add_argument("--log", required=True)


def _cmd_perturb(args) -> int:
    in_dir, out_dir = Path(args.images), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = PerturbSpec(kind=args.kind, apply_fraction=args.apply_fraction, seed=args.seed)
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in pl.IMAGE_SUFFIXES)
    images = [(p.stem, load_image(p)) for p in files]
    perturbed, events = apply_protocol(images, spec, args.phase)
    for sample_id, image in perturbed:
        save_png(image, out_dir / (sample_id + ".png"))
    with open(args.log, "w", encoding="utf-8") as f:
        f.write(events_to_jsonl(events))
    print(f"perturbed {len(events)} of {len(images)} images; log at {args.log}")
    return 0


def _add_combine(sub):
    p = sub.add_parser("combine", help="concatenate manifests with optional per-class caps")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap-per-class", type=int)
    p.add_argument("--tags", help="comma-separated generator tags, one per input")
    p.add_argument("inputs", nargs="+")


def _cmd_combine(args) -> int:
    manifests = [read_manifest(p) for p in args.inputs]
    tags = args.tags.split(",") if args.tags else None
    combined = pl.combine_datasets(
        manifests, seed=args.seed, cap_per_class=args.cap_per_class, tags=tags
    )
    write_manifest(combined, args.out)
    print(f"combined {len(manifests)} manifests into {combined.count} records at {args.out}")
    return 0


def _add_run(sub):
    p = sub.add_parser("run", help="execute a declarative pipeline config")
    p.add_argument("--config", required=True)


def _cmd_run(args) -> int:
    summary = pl.run_pipeline(args.config)
    print(f"ran {len(summary['stages'])} stages; summary in run directory")
    return 0


def _add_validate(sub):
    p = sub.add_parser("validate", help="check a manifest file and print its summary")
    p.add_argument("manifest")


def _cmd_validate(args) -> int:
    m = read_manifest(args.manifest)
    labels = m.labels()
    counts = {LABEL_STRINGS[v]: int(np.sum(labels == v)) for v in (0, 1)}
    print(
        f"ok: {m.count} records, dimension {m.dimension}, "
        f"{counts['real']} real / {counts['fake']} fake"
    )
    return 0


_COMMANDS = {
    "embed-toy": (_add_embed_toy, _cmd_embed_toy),
    "spectrum": (_add_spectrum, _cmd_spectrum),
    "dedup": (_add_dedup, _cmd_dedup),
    "fuse": (_add_fuse, _cmd_fuse),
    "train": (_add_train, _cmd_train),
    "eval": (_add_eval, _cmd_eval),
    "perturb": (_add_perturb, _cmd_perturb),
    "combine": (_add_combine, _cmd_combine),
    "run": (_add_run, _cmd_run),
    "validate": (_add_validate, _cmd_validate),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divdet",
        description="Diversity-curated dual-branch fake-image detection pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for add, _ in _COMMANDS.values():
        add(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command][1](args)
    except (DivdetError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
