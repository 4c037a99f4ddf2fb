"""divdet: diversity-aware dataset curation and dual-branch fake-image
detection on precomputed embeddings.

The package is organized around an on-disk embedding manifest format:
encoders (or the built-in toy embedder) write manifests, the curator
filters them by cosine-similarity redundancy, fusion joins pixel- and
spectrum-branch manifests, and a small trainable head scores the result.
"""

from .curation import (
    CurationConfig,
    CurationReport,
    Discard,
    DiversityCurator,
    curate,
    greedy_dedup,
)
from .errors import (
    DataError,
    DivdetError,
    FormatError,
    IntegrityError,
    PairingError,
)
from .evaluation import (
    EvalReport,
    ScoreSet,
    accuracy,
    auc,
    average_precision,
    evaluate,
    evaluate_by_group,
    roc_and_eer,
)
from .fusion import (
    BranchFeature,
    FusedFeature,
    feature_matrix,
    fuse,
    pair_manifests,
    single_branch_features,
)
from .head import (
    ContrastiveBatchView,
    DetectionHead,
    HeadParameters,
    TrainConfig,
    backward,
    forward,
    forward_batch,
    load_head,
    loss_ce,
    loss_supcon,
    loss_total,
    predict_proba_scores,
    save_head,
    train,
)
from .imageops import bilinear_resize, load_image, save_png, to_grayscale
from .manifest import (
    EmbeddingRecord,
    Manifest,
    read_manifest,
    toy_embed,
    write_manifest,
)
from .perturb import (
    PerturbEvent,
    PerturbSpec,
    apply_protocol,
    events_to_jsonl,
    gaussian_blur,
    jpeg_roundtrip,
)
from .pipeline import combine_datasets, embed_directory, run_pipeline
from .similarity import SimilarityBlock, cosine, pairwise, pairwise_block, pairwise_blocks
from .spectrum import (
    SpectrumImage,
    SpectrumTransformer,
    dft2_magnitude,
    read_spectrum_file,
    to_spectrum_image,
    write_spectrum_file,
)

__version__ = "0.1.0"

__all__ = [
    "BranchFeature",
    "ContrastiveBatchView",
    "CurationConfig",
    "CurationReport",
    "DataError",
    "DetectionHead",
    "Discard",
    "DivdetError",
    "DiversityCurator",
    "EmbeddingRecord",
    "EvalReport",
    "FormatError",
    "FusedFeature",
    "HeadParameters",
    "IntegrityError",
    "Manifest",
    "PairingError",
    "PerturbEvent",
    "PerturbSpec",
    "ScoreSet",
    "SimilarityBlock",
    "SpectrumImage",
    "SpectrumTransformer",
    "TrainConfig",
    "accuracy",
    "apply_protocol",
    "auc",
    "average_precision",
    "backward",
    "bilinear_resize",
    "combine_datasets",
    "cosine",
    "curate",
    "dft2_magnitude",
    "embed_directory",
    "evaluate",
    "evaluate_by_group",
    "events_to_jsonl",
    "feature_matrix",
    "forward",
    "forward_batch",
    "fuse",
    "gaussian_blur",
    "greedy_dedup",
    "jpeg_roundtrip",
    "load_head",
    "load_image",
    "loss_ce",
    "loss_supcon",
    "loss_total",
    "pair_manifests",
    "pairwise",
    "pairwise_block",
    "pairwise_blocks",
    "predict_proba_scores",
    "read_manifest",
    "read_spectrum_file",
    "roc_and_eer",
    "run_pipeline",
    "save_head",
    "save_png",
    "single_branch_features",
    "to_grayscale",
    "toy_embed",
    "train",
    "write_manifest",
    "write_spectrum_file",
]
