"""Foreground scoring, selection, and the foreground-detection benchmark.

Every scoring strategy is normalized to "higher = more foreground", so the
selection rule is a plain argmax everywhere.  Entropy-based scores are
negated once, at definition time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import BinaryMask, ClassProbabilities, LabeledSample, MaskSet, entropy, iou

__all__ = [
    "ScoringStrategy",
    "ScoredMask",
    "FgRecord",
    "FgDetectionDataset",
    "score_mask",
    "select_foreground",
    "bbox_to_mask",
    "build_fg_dataset",
    "roc_auc",
    "roc_points_csv",
]


class ScoringStrategy(str, Enum):
    """How the foreground score of an applied mask is computed.

    CLASS_AIDED and GROUND_TRUTH_IOU need ground-truth inputs (label / mask)
    and are evaluation probes, not deployable detectors.  MAX_PROB is the
    single-model confidence kept as a distinct named strategy.
    """

    CLASS_AIDED = "class-aided"
    ENSEMBLE_ENTROPY = "ensemble-entropy"
    ENSEMBLE_CONFIDENCE = "ensemble-confidence"
    SINGLE_CONFIDENCE = "single-confidence"
    SINGLE_ENTROPY = "single-entropy"
    MAX_PROB = "max-prob"
    GROUND_TRUTH_IOU = "ground-truth-iou"


#: Strategies that require ground-truth inputs and are gated to evaluation use.
EVALUATION_ONLY = frozenset({ScoringStrategy.CLASS_AIDED, ScoringStrategy.GROUND_TRUTH_IOU})

_SINGLE_MODEL = frozenset(
    {ScoringStrategy.SINGLE_CONFIDENCE, ScoringStrategy.SINGLE_ENTROPY, ScoringStrategy.MAX_PROB}
)


@dataclass(frozen=True)
class ScoredMask:
    """A candidate mask's foreground score plus the member outputs behind it."""

    mask_index: int
    score: float
    per_member_probs: tuple[ClassProbabilities, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")
        object.__setattr__(self, "per_member_probs", tuple(self.per_member_probs))


def _check_members(probs: Sequence[ClassProbabilities]) -> None:
    if len(probs) == 0:
        raise ValueError("empty member list")
    sizes = {p.num_classes for p in probs}
    if len(sizes) > 1:
        raise ValueError(f"members disagree on class count: {sizes}")


def score_mask(
    strategy: ScoringStrategy,
    probs: Sequence[ClassProbabilities],
    *,
    label: Optional[int] = None,
    gt_mask: Optional[BinaryMask] = None,
    candidate_mask: Optional[BinaryMask] = None,
) -> float:
    """Foreground score of one applied mask, higher = more foreground.

    ``probs`` holds one probability vector per ensemble member (exactly one
    for the single-model strategies).  Ensemble strategies accept M = 1 and
    then reduce to their single-model counterparts.
    """
    if strategy is ScoringStrategy.GROUND_TRUTH_IOU:
        if gt_mask is None or candidate_mask is None:
            raise ValueError("ground-truth-iou needs gt_mask and candidate_mask")
        return iou(candidate_mask, gt_mask)

    _check_members(probs)
    if strategy in _SINGLE_MODEL and len(probs) != 1:
        raise ValueError(f"{strategy.value} expects exactly one member, got {len(probs)}")

    if strategy is ScoringStrategy.CLASS_AIDED:
        if label is None:
            raise ValueError("class-aided needs the ground-truth label")
        if not (0 <= label < probs[0].num_classes):
            raise ValueError(f"label {label} outside [0, {probs[0].num_classes})")
        return float(np.mean([p.probs[label] for p in probs]))
    if strategy is ScoringStrategy.ENSEMBLE_ENTROPY:
        return -float(np.mean([entropy(p) for p in probs]))
    if strategy is ScoringStrategy.ENSEMBLE_CONFIDENCE:
        return float(np.mean([p.probs for p in probs], axis=0).max())
    if strategy in (ScoringStrategy.SINGLE_CONFIDENCE, ScoringStrategy.MAX_PROB):
        return float(probs[0].probs.max())
    if strategy is ScoringStrategy.SINGLE_ENTROPY:
        return -entropy(probs[0])
    raise ValueError(f"unknown strategy: {strategy!r}")


def select_foreground(scored: Sequence[ScoredMask]) -> int:
    """Index of the highest-scoring mask; ties go to the lowest mask_index."""
    if not scored:
        raise ValueError("no candidate masks")
    best = min(scored, key=lambda s: (-s.score, s.mask_index))
    return best.mask_index


def bbox_to_mask(bbox: tuple[int, int, int, int], height: int, width: int) -> BinaryMask:
    """Rectangular mask for a (row0, col0, row1, col1) half-open box."""
    r0, c0, r1, c1 = bbox
    if not (0 <= r0 < r1 <= height and 0 <= c0 < c1 <= width):
        raise ValueError(f"bbox {bbox} outside a {height}x{width} grid")
    bits = np.zeros((height, width), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return BinaryMask(bits)


@dataclass(frozen=True)
class FgRecord:
    sample_id: str
    mask_index: int
    label: int  # 1 = foreground, 0 = everything else
    score: float


@dataclass(frozen=True)
class FgDetectionDataset:
    """Binary foreground/non-foreground records with per-mask scores.

    Per retained sample exactly one record carries label 1 (the mask with
    the highest IoU against the ground-truth bounding box).  Samples where
    every candidate has zero IoU keep the tie-break positive but are flagged
    in ``degenerate_sample_ids``.
    """

    records: tuple[FgRecord, ...]
    skipped_missing_bbox: int = 0
    degenerate_sample_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "degenerate_sample_ids", tuple(self.degenerate_sample_ids))


def build_fg_dataset(
    samples: Sequence[LabeledSample],
    masksets: Mapping[str, MaskSet],
    scores: Mapping[str, Sequence[float]],
) -> FgDetectionDataset:
    """Label each sample's candidate masks foreground/background by bbox IoU.

    The candidate with the highest IoU against the ground-truth bounding box
    gets label 1 (ties: lowest index); all others get 0.  Samples without a
    bbox are skipped and counted.
    """
    records: list[FgRecord] = []
    skipped = 0
    degenerate: list[str] = []
    for sample in samples:
        if sample.gt_bbox is None:
            skipped += 1
            continue
        maskset = masksets[sample.id]
        if len(maskset) == 0:
            raise ValueError(f"sample {sample.id}: empty candidate mask set")
        sample_scores = list(scores[sample.id])
        if len(sample_scores) != len(maskset):
            raise ValueError(
                f"sample {sample.id}: {len(sample_scores)} scores for {len(maskset)} masks"
            )
        height, width = maskset.shape
        box = bbox_to_mask(sample.gt_bbox, height, width)
        ious = [iou(m, box) for m in maskset]
        best = int(np.argmax(ious))  # first maximum = lowest index
        if ious[best] == 0.0:
            degenerate.append(sample.id)
        for k, score in enumerate(sample_scores):
            records.append(FgRecord(sample.id, k, 1 if k == best else 0, float(score)))
    return FgDetectionDataset(
        records=tuple(records),
        skipped_missing_bbox=skipped,
        degenerate_sample_ids=tuple(degenerate),
    )


def roc_auc(
    records: Sequence[tuple[int, float]],
) -> tuple[float, list[tuple[float, float]]]:
    """ROC curve and its area via a threshold sweep over distinct scores.

    Tied scores advance TP and FP together, so trapezoidal integration
    equals the Mann-Whitney statistic P(s+ > s-) + 0.5 P(s+ = s-).
    Returns (auroc, [(fpr, tpr), ...]) with fpr ascending from (0,0) to (1,1).
    """
    labels = np.asarray([r[0] for r in records], dtype=np.int64)
    scores = np.asarray([r[1] for r in records], dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: need at least one positive and one negative")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    points: list[tuple[float, float]] = [(0.0, 0.0)]
    tp = fp = 0
    auc = 0.0
    i = 0
    n = len(records)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        group = sorted_labels[i:j]
        tp_prev, fp_prev = tp, fp
        tp += int((group == 1).sum())
        fp += int((group == 0).sum())
        auc += (fp - fp_prev) / n_neg * (tp + tp_prev) / (2 * n_pos)
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return auc, points


def roc_points_csv(points: Sequence[tuple[float, float]]) -> str:
    """ROC points as CSV text with columns fpr,tpr (ascending fpr)."""
    lines = ["fpr,tpr"]
    lines.extend(f"{fpr!r},{tpr!r}" for fpr, tpr in points)
    return "\n".join(lines) + "\n"
