"""Dataset-level plumbing and the declarative pipeline runner.

A pipeline config is a JSON document: a seed, a run directory, and an
ordered stage list whose parameter blocks mirror the per-module configs.
Inputs are resolved against earlier stage outputs first, then against the
config file's directory; all outputs land under the run directory.  The
runner validates every referenced input before executing anything and
writes a machine-readable summary (with content hashes of stage inputs)
at the end.  Identical config + inputs reproduce identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .curation import CurationConfig, curate
from .errors import DataError, FormatError, IntegrityError
from .evaluation import evaluate, evaluate_by_group
from .fusion import pair_manifests
from .head import TrainConfig, load_head, predict_proba_scores, save_head, train
from .imageops import load_image
from .manifest import LABEL_NAMES, Manifest, read_manifest, toy_embed, write_manifest
from .perturb import PerturbSpec, apply_protocol, events_to_jsonl
from .spectrum import SpectrumImage, read_spectrum_file, to_spectrum_image, write_spectrum_file

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPECTRUM_SUFFIX = ".spec"

THREADS_ENV = "DIVDET_THREADS"


def worker_count() -> int:
    """Thread count for per-image fan-out, from the environment (min 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1


def _parallel_map(fn, items: list):
    """Map preserving input order; fans out only when configured to."""
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def load_labels_file(path) -> dict[str, tuple[int, str]]:
    """Read a labels sidecar: JSONL rows {"file", "label", "generator"}.

    Returns {file name: (label int, generator)}; each file name is also
    indexed by its stem so spectrum derivatives can share labels.
    """
    out: dict[str, tuple[int, str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: bad JSON: {e}") from e
            if "file" not in obj or "label" not in obj:
                raise FormatError(f"{path}:{lineno}: needs 'file' and 'label' fields")
            if obj["label"] not in LABEL_NAMES:
                raise FormatError(
                    f"{path}:{lineno}: label must be 'real' or 'fake', got {obj['label']!r}"
                )
            entry = (LABEL_NAMES[obj["label"]], str(obj.get("generator", "")))
            name = str(obj["file"])
            out[name] = entry
            out.setdefault(Path(name).stem, entry)
    return out


def _load_grid(path: Path) -> np.ndarray:
    if path.suffix == SPECTRUM_SUFFIX:
        return read_spectrum_file(path).grid
    return load_image(path)


def embed_directory(
    in_dir, labels_path, dim: int, seed: int, branch: str = "pixel"
) -> Manifest:
    """Embed every image (or stored spectrum) in a directory with the toy
    embedder, labeling from the sidecar file.  Ids are file stems; files
    without a label entry are an error, not a skip."""
    in_dir = Path(in_dir)
    files = sorted(
        p for p in in_dir.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES + (SPECTRUM_SUFFIX,)
    )
    if not files:
        raise DataError(f"{in_dir}: no embeddable files found")
    labels = load_labels_file(labels_path)
    metas = []
    for p in files:
        entry = labels.get(p.name) or labels.get(p.stem)
        if entry is None:
            raise DataError(f"{p.name}: no entry in labels file {labels_path}")
        metas.append(entry)
    vectors = _parallel_map(lambda p: toy_embed(_load_grid(p), dim, seed), files)
    return Manifest.from_arrays(
        ids=[p.stem for p in files],
        labels=[m[0] for m in metas],
        vectors=np.stack(vectors),
        generators=[m[1] for m in metas],
        branch=branch,
        source_note=f"toy_embed dim={dim} seed={seed} from {in_dir.name}",
    )


def combine_datasets(
    manifests: Sequence[Manifest],
    seed: int = 0,
    cap_per_class: int | None = None,
    tags: Sequence[str] | None = None,
) -> Manifest:
    """Concatenate manifests, preserving per-source provenance.

    ``tags``, when given, overwrite each source's generator field.  With
    ``cap_per_class``, each (source, class) cell larger than the cap is
    reduced by a seeded uniform subsample (original order kept).  Sources
    must share a dimension, and ids must stay globally unique.
    """
    if not manifests:
        raise ValueError("need at least one manifest")
    if tags is not None and len(tags) != len(manifests):
        raise ValueError("one tag per manifest required")
    dims = {m.dimension for m in manifests}
    if len(dims) > 1:
        raise IntegrityError(f"dimension mismatch across sources: {sorted(dims)}")
    rng = np.random.default_rng(seed)
    records = []
    for k, m in enumerate(manifests):
        chosen = m.records
        if cap_per_class is not None:
            kept = []
            for cls in (0, 1):
                cls_recs = [r for r in m.records if r.label == cls]
                if len(cls_recs) > cap_per_class:
                    pick = set(
                        rng.choice(len(cls_recs), size=cap_per_class, replace=False).tolist()
                    )
                    cls_recs = [r for i, r in enumerate(cls_recs) if i in pick]
                kept.extend(cls_recs)
            order = {r.id: i for i, r in enumerate(m.records)}
            chosen = sorted(kept, key=lambda r: order[r.id])
        for r in chosen:
            if tags is not None:
                r = type(r)(id=r.id, label=r.label, generator=tags[k],
                            branch=r.branch, vector=r.vector, source_path=r.source_path)
            records.append(r)
    combined = Manifest(
        dimension=manifests[0].dimension,
        records=records,
        source_note="; ".join(filter(None, (m.source_note for m in manifests))),
    )
    combined.validate()
    return combined


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_path(path: Path) -> str:
    """Content hash of a file, or of a directory's files (names + bytes)."""
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(p.name.encode("utf-8"))
                h.update(bytes.fromhex(sha256_file(p)))
        return h.hexdigest()
    return sha256_file(path)


# (input path fields, output path fields) per stage kind; directories and
# files are both just paths here
STAGE_IO: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "embed-toy": (("images", "labels"), ("out",)),
    "spectrum": (("images",), ("out",)),
    "dedup": (("pixel",), ("out", "report")),
    "fuse": (("pixel", "spectrum"), ("out",)),
    "train": (("features",), ("out", "log")),
    "eval": (("features", "model"), ("report", "roc")),
    "perturb": (("images",), ("out", "log")),
    "combine": (("inputs",), ("out",)),
}


class PipelineRunner:
    """Executes a validated stage list under a run directory."""

    def __init__(self, config: dict, config_dir) -> None:
        self.config = config
        self.config_dir = Path(config_dir)
        if "run_dir" not in config or "stages" not in config:
            raise ValueError("pipeline config needs 'run_dir' and 'stages'")
        run_dir = Path(config["run_dir"])
        self.run_dir = run_dir if run_dir.is_absolute() else self.config_dir / run_dir
        self.seed = int(config.get("seed", 0))
        self.stages = config["stages"]
        if not isinstance(self.stages, list) or not self.stages:
            raise ValueError("'stages' must be a nonempty list")

    def _input_paths(self, stage: dict) -> list[str]:
        kind = stage["stage"]
        names = STAGE_IO[kind][0]
        paths = []
        for n in names:
            v = stage.get(n)
            if v is None:
                raise ValueError(f"stage {kind!r}: missing required input {n!r}")
            paths.extend(v if isinstance(v, list) else [v])
        return paths

    def _output_paths(self, stage: dict) -> list[str]:
        kind = stage["stage"]
        return [stage[n] for n in STAGE_IO[kind][1] if stage.get(n)]

    def resolve_input(self, rel: str) -> Path:
        """Inputs prefer earlier stage outputs (run dir), then config-dir
        relative paths, then absolute paths."""
        p = Path(rel)
        if p.is_absolute():
            return p
        run_local = self.run_dir / p
        if run_local.exists():
            return run_local
        return self.config_dir / p

    def validate(self) -> None:
        """Check stage kinds and input availability before any execution."""
        produced: set[str] = set()
        problems = []
        for i, stage in enumerate(self.stages):
            kind = stage.get("stage")
            if kind not in STAGE_IO:
                problems.append(f"stage {i}: unknown kind {kind!r}")
                continue
            for rel in self._input_paths(stage):
                p = Path(rel)
                if rel in produced or (not p.is_absolute() and str(p) in produced):
                    continue
                if p.is_absolute():
                    if not p.exists():
                        problems.append(f"stage {i} ({kind}): missing input {rel}")
                elif not (self.config_dir / p).exists() and not (self.run_dir / p).exists():
                    problems.append(f"stage {i} ({kind}): missing input {rel}")
            for rel in self._output_paths(stage):
                produced.add(rel)
            extra_meta = [rel + ".meta.jsonl" for rel in self._output_paths(stage)]
            produced.update(extra_meta)
        if problems:
            raise ValueError("pipeline validation failed:\n  " + "\n  ".join(problems))

    def run(self) -> dict:
        self.validate()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        started = datetime.now(timezone.utc).isoformat()
        summary_stages = []
        for i, stage in enumerate(self.stages):
            kind = stage["stage"]
            logger.info("stage %d: %s", i, kind)
            try:
                inputs = {
                    rel: _hash_path(self.resolve_input(rel))
                    for rel in self._input_paths(stage)
                }
                getattr(self, "_run_" + kind.replace("-", "_"))(stage)
            except Exception as e:
                raise RuntimeError(f"stage {i} ({kind}) failed: {e}") from e
            summary_stages.append(
                {"stage": kind, "inputs": inputs, "outputs": self._output_paths(stage)}
            )
        summary = {
            "seed": self.seed,
            "stages": summary_stages,
            "metadata": {
                "started": started,
                "finished": datetime.now(timezone.utc).isoformat(),
            },
        }
        with open(self.run_dir / "run_summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        return summary

    def _out(self, rel: str) -> Path:
        p = self.run_dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _stage_seed(self, stage: dict) -> int:
        return int(stage.get("seed", self.seed))

    def _run_embed_toy(self, stage: dict) -> None:
        m = embed_directory(
            self.resolve_input(stage["images"]),
            self.resolve_input(stage["labels"]),
            dim=int(stage.get("dim", 64)),
            seed=self._stage_seed(stage),
            branch=stage.get("branch", "pixel"),
        )
        write_manifest(m, self._out(stage["out"]))

    def _run_spectrum(self, stage: dict) -> None:
        in_dir = self.resolve_input(stage["images"])
        out_dir = self._out(stage["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        resolution = int(stage.get("resolution", 32))
        files = sorted(p for p in Path(in_dir).iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"{in_dir}: no image files found")

        def one(p: Path) -> SpectrumImage:
            return to_spectrum_image(load_image(p), resolution, source_id=p.stem)

        for p, spec in zip(files, _parallel_map(one, files)):
            write_spectrum_file(spec, out_dir / (p.stem + SPECTRUM_SUFFIX))

    def _run_dedup(self, stage: dict) -> None:
        manifest = read_manifest(self.resolve_input(stage["pixel"]))
        cfg = CurationConfig(
            threshold=float(stage["threshold"]),
            balance_tolerance=int(stage.get("balance_tolerance", 0)),
            seed=self._stage_seed(stage),
            refine_floor=float(stage.get("refine_floor", 0.3)),
        )
        curated, report = curate(manifest, cfg)
        write_manifest(curated, self._out(stage["out"]))
        with open(self._out(stage["report"]), "w", encoding="utf-8") as f:
            f.write(report.to_jsonl())

    def _run_fuse(self, stage: dict) -> None:
        pixel = read_manifest(self.resolve_input(stage["pixel"]))
        spectrum = read_manifest(self.resolve_input(stage["spectrum"]))
        fused = pair_manifests(pixel, spectrum)
        m = Manifest.from_arrays(
            ids=[f.id for f in fused],
            labels=[f.label for f in fused],
            vectors=np.stack([f.vector for f in fused]),
            generators=[f.generator for f in fused],
            branch="fused",
            source_note="fused pixel+spectrum",
        )
        write_manifest(m, self._out(stage["out"]))

    def _train_config(self, stage: dict) -> TrainConfig:
        return TrainConfig(
            epochs=int(stage.get("epochs", 10)),
            batch_size=int(stage.get("batch_size", 128)),
            learning_rate=float(stage.get("learning_rate", 1e-4)),
            sc_weight=float(stage.get("sc_weight", 0.1)),
            sc_temperature=float(stage.get("sc_temperature", 0.1)),
            dropout_rate=float(stage.get("dropout_rate", 0.2)),
            leaky_slope=float(stage.get("leaky_slope", 0.01)),
            seed=self._stage_seed(stage),
            hidden_dims=tuple(stage.get("hidden_dims", (256, 128))),
            sc_features=stage.get("sc_features", "fused"),
        )

    def _run_train(self, stage: dict) -> None:
        from .fusion import single_branch_features

        manifest = read_manifest(self.resolve_input(stage["features"]))
        cfg = self._train_config(stage)
        params, log = train(single_branch_features(manifest), cfg)
        save_head(params, cfg, self._out(stage["out"]))
        with open(self._out(stage["log"]), "w", encoding="utf-8") as f:
            for entry in log:
                f.write(entry.to_json() + "\n")

    def _run_eval(self, stage: dict) -> None:
        manifest = read_manifest(self.resolve_input(stage["features"]))
        params, cfg = load_head(self.resolve_input(stage["model"]))
        scores = predict_proba_scores(params, manifest.matrix(), cfg)
        labels = manifest.labels()
        report = evaluate(scores, labels, threshold=float(stage.get("threshold", 0.5)))
        with open(self._out(stage["report"]), "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        with open(self._out(stage["roc"]), "w", encoding="utf-8") as f:
            f.write(report.roc_csv())
        if stage.get("by_generator"):
            groups = [r.generator for r in manifest.records]
            by = evaluate_by_group(scores, labels, groups)
            with open(self._out(stage["by_generator"]), "w", encoding="utf-8") as f:
                json.dump({k: json.loads(v.to_json()) for k, v in by.items()},
                          f, indent=2, sort_keys=True)
                f.write("\n")

    def _run_perturb(self, stage: dict) -> None:
        from .imageops import save_png

        in_dir = self.resolve_input(stage["images"])
        out_dir = self._out(stage["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        spec = PerturbSpec(
            kind=stage.get("kind", "both"),
            apply_fraction=float(stage.get("apply_fraction", 0.5)),
            seed=self._stage_seed(stage),
        )
        files = sorted(p for p in Path(in_dir).iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        images = [(p.stem, load_image(p)) for p in files]
        perturbed, events = apply_protocol(images, spec, stage.get("phase", "train"))
        for sample_id, image in perturbed:
            save_png(image, out_dir / (sample_id + ".png"))
        with open(self._out(stage["log"]), "w", encoding="utf-8") as f:
            f.write(events_to_jsonl(events))

    def _run_combine(self, stage: dict) -> None:
        manifests = [read_manifest(self.resolve_input(p)) for p in stage["inputs"]]
        cap = stage.get("cap_per_class")
        combined = combine_datasets(
            manifests,
            seed=self._stage_seed(stage),
            cap_per_class=None if cap is None else int(cap),
            tags=stage.get("tags"),
        )
        write_manifest(combined, self._out(stage["out"]))


def run_pipeline(config_path) -> dict:
    """Load, validate, and execute a pipeline config file."""
    config_path = Path(config_path)
    with open(config_path, "r", encoding="utf-8") as f:
        config = json.load(f)
    runner = PipelineRunner(config, config_path.parent)
    return runner.run()
