"""Exact binary-detection metrics: accuracy, AUC, average precision, the
ROC staircase, and the equal error rate.

All metrics are computed by closed-form rank/count arithmetic with ties
grouped, so results are deterministic and invariant to input order and to
any strictly monotone rescaling of the scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


@dataclass(frozen=True)
class ScoreSet:
    """Scores (fake-class probabilities) paired with true labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise ValueError("scores and labels must be equal-length 1-D arrays")
        if scores.size == 0:
            raise ValueError("score set is empty")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.labels == 0))

    def require_both_classes(self) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise DataError("metric requires both classes present")


@dataclass
class EvalReport:
    """All metrics for one score set, plus the full ROC point list
    (fpr, tpr, threshold) from (0, 0) down to (1, 1)."""

    acc: float
    auc: float
    ap: float
    eer: float
    roc: list[tuple[float, float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"acc": self.acc, "auc": self.auc, "ap": self.ap, "eer": self.eer,
             "roc_points": len(self.roc)}
        )

    def roc_csv(self) -> str:
        lines = ["fpr,tpr,threshold"]
        for fpr, tpr, thr in self.roc:
            lines.append(f"{fpr:.12g},{tpr:.12g},{thr:.12g}")
        return "\n".join(lines) + "\n"


def accuracy(s: ScoreSet, threshold: float = 0.5) -> float:
    """Fraction of samples whose thresholded score matches the label."""
    predicted = s.scores >= threshold
    return float(np.mean(predicted == (s.labels == 1)))


def auc(s: ScoreSet) -> float:
    """Probability a positive outscores a negative, ties counting half.

    Computed from average ranks, which equals the trapezoidal area under
    the ROC curve exactly, including tied scores.
    """
    s.require_both_classes()
    ranks = rankdata(s.scores, method="average")
    pos_rank_sum = float(ranks[s.labels == 1].sum())
    n_pos, n_neg = s.n_pos, s.n_neg
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _threshold_groups(s: ScoreSet):
    """Descending unique scores with cumulative positive/negative counts at
    each threshold (ties grouped)."""
    order = np.argsort(-s.scores, kind="stable")
    scores = s.scores[order]
    labels = s.labels[order]
    uniq, starts = np.unique(-scores, return_index=True)
    thresholds = -uniq
    cum_pos = np.cumsum(labels == 1)
    cum_neg = np.cumsum(labels == 0)
    ends = np.append(starts[1:], len(scores)) - 1
    return thresholds, cum_pos[ends], cum_neg[ends]


def average_precision(s: ScoreSet) -> float:
    """Area under the precision-recall step curve.

    Thresholds descend over unique scores; each step adds
    (recall gain) * (precision at that threshold).
    """
    if s.n_pos == 0:
        raise DataError("average precision requires at least one positive")
    _, cum_pos, cum_neg = _threshold_groups(s)
    recall = cum_pos / s.n_pos
    precision = cum_pos / (cum_pos + cum_neg)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def roc_and_eer(s: ScoreSet) -> tuple[list[tuple[float, float, float]], float]:
    """The ROC staircase and the equal error rate.

    The curve starts at (0, 0) with an unreachable threshold and walks the
    descending unique scores to (1, 1).  The EER is the false-positive rate
    where the curve crosses fpr = 1 - tpr, linearly interpolated between
    the bracketing points.
    """
    s.require_both_classes()
    thresholds, cum_pos, cum_neg = _threshold_groups(s)
    tpr = cum_pos / s.n_pos
    fpr = cum_neg / s.n_neg
    roc = [(0.0, 0.0, np.inf)]
    roc.extend((float(f), float(t), float(thr)) for f, t, thr in zip(fpr, tpr, thresholds))

    eer = None
    prev_f, prev_t = 0.0, 0.0
    for f, t, _ in roc[1:]:
        gap_prev = 1.0 - prev_t - prev_f
        gap = 1.0 - t - f
        if gap <= 0.0:
            if gap == 0.0:
                eer = f
            else:
                df, dt = f - prev_f, t - prev_t
                frac = gap_prev / (df + dt)
                eer = prev_f + frac * df
            break
        prev_f, prev_t = f, t
    if eer is None:
        eer = fpr[-1]
    return roc, float(eer)


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Full metric report for one score set."""
    s = ScoreSet(np.asarray(scores), np.asarray(labels))
    roc, eer = roc_and_eer(s)
    return EvalReport(
        acc=accuracy(s, threshold),
        auc=auc(s),
        ap=average_precision(s),
        eer=eer,
        roc=roc,
    )


def evaluate_by_group(scores, labels, groups, threshold: float = 0.5) -> dict[str, EvalReport]:
    """Per-group metric reports keyed by group tag (e.g. generator name).

    Groups lacking one of the classes are skipped rather than failing the
    whole report.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups)
    out: dict[str, EvalReport] = {}
    for tag in sorted(set(groups.tolist())):
        sel = groups == tag
        sub_labels = labels[sel]
        if len(set(sub_labels.tolist())) < 2:
            continue
        out[str(tag)] = evaluate(scores[sel], sub_labels, threshold)
    return out
