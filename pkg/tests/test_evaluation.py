"""Metrics: accuracy, ranking AUC, average precision, ROC curve, EER."""

import numpy as np
import pytest

from divdet import (
    DataError,
    EvalReport,
    ScoreSet,
    accuracy,
    auc,
    average_precision,
    evaluate,
    evaluate_by_group,
    roc_and_eer,
)
from reference import ref_auc_paircount, ref_eer_grid, ref_trapezoid_auc


def score_set(scores, labels):
    return ScoreSet(np.asarray(scores, dtype=float), np.asarray(labels, dtype=int))


def random_scores(rng, n=50, ties=False):
    labels = rng.integers(0, 2, size=n)
    labels[0] = 0
    labels[1] = 1
    if ties:
        scores = rng.integers(0, 8, size=n).astype(float) / 7.0
    else:
        scores = rng.random(n)
    return score_set(scores, labels)


class TestAccuracy:
    def test_all_correct(self):
        s = score_set([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert accuracy(s) == 1.0

    def test_all_wrong(self):
        s = score_set([0.1, 0.9], [1, 0])
        assert accuracy(s) == 0.0

    def test_threshold_is_inclusive(self):
        s = score_set([0.5, 0.5], [1, 0])
        assert accuracy(s) == 0.5

    def test_counting_oracle(self, rng):
        for _ in range(20):
            s = random_scores(rng, n=30)
            want = np.mean((s.scores >= 0.5).astype(int) == s.labels)
            assert abs(accuracy(s) - float(want)) < 1e-12


class TestAuc:
    def test_perfect_separation(self):
        s = score_set([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert auc(s) == 1.0

    def test_all_tied_scores(self):
        s = score_set([0.5] * 6, [1, 0, 1, 0, 1, 0])
        assert auc(s) == 0.5

    def test_worked_example(self):
        # one discordant pair and one concordant pair among the crossings
        s = score_set([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
        assert abs(auc(s) - 0.75) < 1e-12

    def test_pair_counting_oracle(self, rng):
        for _ in range(30):
            s = random_scores(rng, n=40, ties=bool(rng.integers(0, 2)))
            assert abs(auc(s) - ref_auc_paircount(s.scores, s.labels)) < 1e-12

    def test_flipping_scores_complements(self, rng):
        for _ in range(10):
            s = random_scores(rng, n=25)
            flipped = score_set(-s.scores, s.labels)
            assert abs(auc(s) + auc(flipped) - 1.0) < 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            auc(score_set([0.1, 0.2], [1, 1]))


class TestAveragePrecision:
    def test_perfect_ranking(self):
        s = score_set([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0])
        assert abs(average_precision(s) - 1.0) < 1e-12

    def test_single_positive_ranked_last(self):
        for k in (2, 5, 9):
            scores = list(np.linspace(1.0, 0.5, k)) + [0.1]
            labels = [0] * k + [1]
            got = average_precision(score_set(scores, labels))
            assert abs(got - 1.0 / (k + 1)) < 1e-12

    def test_worked_example(self):
        # precision 1 at the first hit, 2/3 at the second: mean 5/6
        s = score_set([0.9, 0.6, 0.5, 0.1], [1, 0, 1, 0])
        assert abs(average_precision(s) - 5.0 / 6.0) < 1e-12

    def test_no_positives_rejected(self):
        with pytest.raises(DataError):
            average_precision(score_set([0.1, 0.2], [0, 0]))

    def test_recall_weighted_oracle(self, rng):
        # independent step-sum over thresholds at every distinct score
        for _ in range(20):
            s = random_scores(rng, n=25, ties=bool(rng.integers(0, 2)))
            got = average_precision(s)
            thresholds = np.unique(s.scores)[::-1]
            prev_recall = 0.0
            total = 0.0
            n_pos = int(np.sum(s.labels == 1))
            for t in thresholds:
                sel = s.scores >= t
                tp = int(np.sum(s.labels[sel] == 1))
                precision = tp / int(np.sum(sel))
                recall = tp / n_pos
                total += (recall - prev_recall) * precision
                prev_recall = recall
            assert abs(got - total) < 1e-12


class TestRocAndEer:
    def test_curve_endpoints_and_monotonicity(self, rng):
        for _ in range(10):
            s = random_scores(rng, n=30, ties=True)
            roc, _ = roc_and_eer(s)
            assert roc[0][:2] == (0.0, 0.0)
            assert roc[-1][:2] == (1.0, 1.0)
            assert roc[0][2] == np.inf
            fprs = [p[0] for p in roc]
            tprs = [p[1] for p in roc]
            assert all(b >= a for a, b in zip(fprs, fprs[1:]))
            assert all(b >= a for a, b in zip(tprs, tprs[1:]))

    def test_perfect_separation_gives_zero(self):
        s = score_set([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        _, eer = roc_and_eer(s)
        assert eer == 0.0

    def test_all_tied_gives_half(self):
        s = score_set([0.4] * 4, [1, 0, 1, 0])
        _, eer = roc_and_eer(s)
        assert abs(eer - 0.5) < 1e-12

    def test_six_sample_example_against_dense_grid(self):
        s = score_set([0.95, 0.7, 0.65, 0.6, 0.3, 0.1], [1, 1, 0, 1, 0, 0])
        _, eer = roc_and_eer(s)
        assert abs(eer - ref_eer_grid(s.scores, s.labels)) < 1e-3

    def test_random_sets_against_dense_grid(self, rng):
        # the curve walk interpolates between vertices while the grid oracle
        # only reaches achievable operating points, so allow one step of slack
        for _ in range(15):
            s = random_scores(rng, n=40)
            _, eer = roc_and_eer(s)
            slack = 1.0 / min(s.n_pos, s.n_neg)
            assert abs(eer - ref_eer_grid(s.scores, s.labels)) <= slack

    def test_eer_bounded(self, rng):
        # worse-than-random score sets can cross above one half
        for _ in range(10):
            s = random_scores(rng, n=20, ties=True)
            _, eer = roc_and_eer(s)
            assert 0.0 <= eer <= 1.0


class TestInvariances:
    def test_monotone_transform_leaves_ranking_metrics_unchanged(self, rng):
        s = random_scores(rng, n=35)
        base_auc = auc(s)
        base_ap = average_precision(s)
        _, base_eer = roc_and_eer(s)
        transforms = [
            lambda x: 2.0 * x + 1.0,
            lambda x: x ** 3,
            lambda x: np.exp(x),
            lambda x: np.arctan(x),
        ]
        for _ in range(16):
            a = float(rng.uniform(0.5, 3.0))
            b = float(rng.uniform(-1.0, 1.0))
            transforms.append(lambda x, a=a, b=b: a * x + b)
        for fn in transforms:
            t = score_set(fn(s.scores), s.labels)
            assert abs(auc(t) - base_auc) < 1e-12
            assert abs(average_precision(t) - base_ap) < 1e-12
            _, eer = roc_and_eer(t)
            assert abs(eer - base_eer) < 1e-12

    def test_rank_auc_equals_trapezoid_without_ties(self, rng):
        for _ in range(20):
            s = random_scores(rng, n=30, ties=False)
            assert abs(auc(s) - ref_trapezoid_auc(s.scores, s.labels)) < 1e-12


class TestEvaluate:
    def test_report_fields(self, rng):
        s = random_scores(rng, n=30)
        report = evaluate(s.scores, s.labels)
        assert isinstance(report, EvalReport)
        assert report.auc == auc(s)
        assert report.acc == accuracy(s)
        payload = report.to_json()
        for key in ("acc", "auc", "ap", "eer", "roc_points"):
            assert key in payload

    def test_roc_csv_layout(self, rng):
        s = random_scores(rng, n=10)
        report = evaluate(s.scores, s.labels)
        lines = report.roc_csv().strip().split("\n")
        assert lines[0] == "fpr,tpr,threshold"
        assert len(lines) == len(report.roc) + 1
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 0.0

    def test_by_group_skips_single_class_groups(self, rng):
        scores = np.array([0.9, 0.8, 0.2, 0.1, 0.7, 0.6])
        labels = np.array([1, 1, 0, 0, 1, 1])
        groups = ["gan", "gan", "gan", "gan", "diffusion", "diffusion"]
        out = evaluate_by_group(scores, labels, groups)
        assert set(out) == {"gan"}
        assert out["gan"].auc == 1.0

    def test_by_group_sorted_tags(self):
        scores = np.array([0.9, 0.1, 0.8, 0.2])
        labels = np.array([1, 0, 1, 0])
        groups = ["zeta", "zeta", "alpha", "alpha"]
        out = evaluate_by_group(scores, labels, groups)
        assert list(out) == ["alpha", "zeta"]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(np.array([0.1, 0.2]), np.array([0, 1, 1]))
