import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from occam.core import ClassProbabilities, LabeledSample, full_mask
from occam.fgscore import (
    FgDetectionDataset,
    ScoredMask,
    ScoringStrategy,
    bbox_to_mask,
    build_fg_dataset,
    roc_auc,
    roc_points_csv,
    score_mask,
    select_foreground,
)

from conftest import make_image, make_mask, make_maskset


def probs(values):
    return ClassProbabilities(np.asarray(values, dtype=np.float64))


def mann_whitney(records):
    """O(n^2) pairwise oracle: P(s+ > s-) + 0.5 P(s+ = s-)."""
    pos = [s for label, s in records if label == 1]
    neg = [s for label, s in records if label == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestScoreMask:
    def test_class_aided_indexes_label(self):
        assert score_mask(ScoringStrategy.CLASS_AIDED, [probs([0.1, 0.7, 0.2])], label=1) == 0.7

    def test_ensemble_entropy_uniform_pair(self):
        members = [probs([0.5, 0.5]), probs([0.5, 0.5])]
        score = score_mask(ScoringStrategy.ENSEMBLE_ENTROPY, members)
        assert score == pytest.approx(-math.log(2), abs=1e-12)

    def test_ensemble_confidence_symmetric(self):
        members = [probs([1.0, 0.0]), probs([0.0, 1.0])]
        assert score_mask(ScoringStrategy.ENSEMBLE_CONFIDENCE, members) == 0.5

    def test_class_aided_averages_members(self):
        members = [probs([0.2, 0.8]), probs([0.6, 0.4])]
        assert score_mask(ScoringStrategy.CLASS_AIDED, members, label=1) == pytest.approx(0.6)

    def test_single_model_reductions(self, rng):
        for _ in range(20):
            raw = rng.random(4) + 0.01
            p = probs(raw / raw.sum())
            assert score_mask(ScoringStrategy.ENSEMBLE_ENTROPY, [p]) == score_mask(
                ScoringStrategy.SINGLE_ENTROPY, [p]
            )
            assert score_mask(ScoringStrategy.ENSEMBLE_CONFIDENCE, [p]) == score_mask(
                ScoringStrategy.SINGLE_CONFIDENCE, [p]
            )
            assert score_mask(ScoringStrategy.MAX_PROB, [p]) == score_mask(
                ScoringStrategy.SINGLE_CONFIDENCE, [p]
            )

    def test_ground_truth_iou(self):
        gt = make_mask(8, 8, [(0, 0, 4, 8)])
        cand = make_mask(8, 8, [(0, 0, 8, 8)])
        score = score_mask(ScoringStrategy.GROUND_TRUTH_IOU, [], gt_mask=gt, candidate_mask=cand)
        assert score == 0.5

    def test_missing_aux_raises(self):
        with pytest.raises(ValueError, match="label"):
            score_mask(ScoringStrategy.CLASS_AIDED, [probs([0.5, 0.5])])
        with pytest.raises(ValueError, match="gt_mask"):
            score_mask(ScoringStrategy.GROUND_TRUTH_IOU, [])

    def test_empty_member_list_raises(self):
        with pytest.raises(ValueError, match="empty member list"):
            score_mask(ScoringStrategy.ENSEMBLE_ENTROPY, [])

    def test_single_strategies_reject_ensembles(self):
        members = [probs([0.5, 0.5]), probs([0.5, 0.5])]
        with pytest.raises(ValueError, match="exactly one member"):
            score_mask(ScoringStrategy.SINGLE_ENTROPY, members)

    def test_mismatched_class_counts_raise(self):
        with pytest.raises(ValueError, match="class count"):
            score_mask(ScoringStrategy.ENSEMBLE_ENTROPY, [probs([0.5, 0.5]), probs([0.3, 0.3, 0.4])])


class TestSelectForeground:
    def test_argmax(self):
        scored = [ScoredMask(i, s) for i, s in enumerate([0.2, 0.9, 0.5])]
        assert select_foreground(scored) == 1

    def test_tie_breaks_to_lowest_index(self):
        scored = [ScoredMask(0, 0.4), ScoredMask(1, 0.4)]
        assert select_foreground(scored) == 0

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="no candidate masks"):
            select_foreground([])

    @given(
        st.lists(st.floats(-10, 10), min_size=1, max_size=10),
        st.floats(0.1, 5.0),
        st.floats(-3.0, 3.0),
    )
    def test_invariant_under_monotone_transforms(self, scores, scale, shift):
        # Quantize so the transforms stay strictly increasing in float64
        # (x**3 underflows to 0 for subnormal inputs).
        scores = [round(s, 6) for s in scores]
        scored = [ScoredMask(i, s) for i, s in enumerate(scores)]
        base = select_foreground(scored)
        for transform in (
            lambda x: scale * x + shift,
            lambda x: x**3,
            lambda x: math.atan(x),
        ):
            mapped = [ScoredMask(i, transform(s)) for i, s in enumerate(scores)]
            assert select_foreground(mapped) == base


def sample_with_bbox(sample_id, bbox, height=16, width=16):
    return LabeledSample(id=sample_id, image=make_image(height, width), label=0, gt_bbox=bbox)


class TestBuildFgDataset:
    def test_bbox_match_gets_positive(self):
        sample = sample_with_bbox("a", (2, 2, 6, 6))
        masks = make_maskset([make_mask(16, 16, [(2, 2, 6, 6)]), make_mask(16, 16, [(10, 10, 14, 14)])])
        data = build_fg_dataset([sample], {"a": masks}, {"a": [0.9, 0.1]})
        assert [r.label for r in data.records] == [1, 0]
        assert [r.score for r in data.records] == [0.9, 0.1]

    def test_all_disjoint_flagged_degenerate(self):
        sample = sample_with_bbox("a", (0, 0, 2, 2))
        masks = make_maskset([make_mask(16, 16, [(8, 8, 10, 10)]), make_mask(16, 16, [(12, 12, 14, 14)])])
        data = build_fg_dataset([sample], {"a": masks}, {"a": [0.5, 0.5]})
        assert [r.label for r in data.records] == [1, 0]
        assert data.degenerate_sample_ids == ("a",)

    def test_exactly_one_positive_per_sample(self, rng):
        samples, masksets, scores = [], {}, {}
        for i in range(25):
            r0, c0 = rng.integers(0, 8, size=2)
            bbox = (int(r0), int(c0), int(r0) + int(rng.integers(2, 8)), int(c0) + int(rng.integers(2, 8)))
            sid = f"s{i}"
            samples.append(sample_with_bbox(sid, bbox))
            n_masks = int(rng.integers(1, 5))
            masksets[sid] = make_maskset(
                [
                    make_mask(16, 16, [(int(a), int(b), int(a) + int(c), int(b) + int(d))])
                    for a, b, c, d in rng.integers(1, 7, size=(n_masks, 4))
                ]
            )
            scores[sid] = list(rng.random(n_masks))
        data = build_fg_dataset(samples, masksets, scores)
        for sid in masksets:
            labels = [r.label for r in data.records if r.sample_id == sid]
            assert sum(labels) == 1

    def test_missing_bbox_skipped_and_counted(self):
        no_box = LabeledSample(id="b", image=make_image(), label=0)
        data = build_fg_dataset([no_box], {"b": make_maskset([make_mask(16, 16, [(0, 0, 4, 4)])])}, {"b": [0.5]})
        assert data.records == ()
        assert data.skipped_missing_bbox == 1

    def test_empty_maskset_raises(self):
        sample = sample_with_bbox("a", (0, 0, 4, 4))
        with pytest.raises(ValueError, match="empty candidate mask set"):
            build_fg_dataset([sample], {"a": make_maskset([])}, {"a": []})

    def test_score_count_mismatch_raises(self):
        sample = sample_with_bbox("a", (0, 0, 4, 4))
        masks = make_maskset([make_mask(16, 16, [(0, 0, 4, 4)])])
        with pytest.raises(ValueError, match="scores for"):
            build_fg_dataset([sample], {"a": masks}, {"a": [0.1, 0.2]})

    def test_bbox_to_mask_bounds(self):
        with pytest.raises(ValueError):
            bbox_to_mask((0, 0, 20, 4), 16, 16)
        assert bbox_to_mask((0, 0, 4, 4), 16, 16).area == 16


class TestRocAuc:
    def test_perfect_separation(self):
        records = [(1, 1.0)] * 5 + [(0, 0.0)] * 7
        auroc, points = roc_auc(records)
        assert auroc == 1.0
        assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)

    def test_all_scores_identical(self):
        auroc, points = roc_auc([(1, 0.3)] * 4 + [(0, 0.3)] * 6)
        assert auroc == 0.5
        assert points == [(0.0, 0.0), (1.0, 1.0)]

    def test_matches_pairwise_oracle_with_ties(self, rng):
        for _ in range(100):
            n = int(rng.integers(5, 200))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0], labels[-1] = 0, 1
            scores = np.round(rng.random(n), 2)  # coarse rounding injects ties
            records = list(zip(labels.tolist(), scores.tolist()))
            auroc, _ = roc_auc(records)
            assert auroc == pytest.approx(mann_whitney(records), abs=1e-9)

    def test_monotone_invariance(self, rng):
        labels = rng.integers(0, 2, size=60)
        labels[0], labels[1] = 0, 1
        scores = rng.random(60)
        base, _ = roc_auc(list(zip(labels.tolist(), scores.tolist())))
        warped, _ = roc_auc(list(zip(labels.tolist(), (np.exp(scores) * 3 + 1).tolist())))
        assert warped == pytest.approx(base, abs=1e-12)

    def test_label_complement_flips_auroc(self, rng):
        labels = rng.integers(0, 2, size=50)
        labels[0], labels[1] = 0, 1
        scores = np.round(rng.random(50), 1)
        records = list(zip(labels.tolist(), scores.tolist()))
        flipped = [(1 - label, s) for label, s in records]
        assert roc_auc(flipped)[0] == pytest.approx(1.0 - roc_auc(records)[0], abs=1e-12)

    def test_fpr_ascending(self, rng):
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        records = list(zip(labels.tolist(), np.round(rng.random(40), 1).tolist()))
        _, points = roc_auc(records)
        fprs = [fpr for fpr, _ in points]
        assert fprs == sorted(fprs)

    def test_single_class_raises(self):
        with pytest.raises(ValueError, match="AUROC undefined"):
            roc_auc([(1, 0.5), (1, 0.2)])

    def test_csv_export(self):
        text = roc_points_csv([(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)])
        lines = text.strip().split("\n")
        assert lines[0] == "fpr,tpr"
        assert lines[1] == "0.0,0.0"
        assert len(lines) == 4
