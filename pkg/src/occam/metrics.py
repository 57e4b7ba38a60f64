"""Object-discovery and robust-classification metrics.

FG-ARI scores clustering agreement on ground-truth foreground pixels only;
mBO averages, over ground-truth instances, the best IoU any predicted mask
achieves.  Classification metrics cover accuracy, worst-group accuracy, and
the common/counter accuracy gap.  Pair counts are kept as exact integers
until the final ratio so reductions are order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import MaskSet, iou_bits

__all__ = [
    "InstanceSegmentation",
    "EvalRecord",
    "GroupedResults",
    "maskset_to_partition",
    "adjusted_rand_index",
    "fg_ari",
    "mbo",
    "accuracy",
    "worst_group_accuracy",
    "common_counter_gap",
    "metric_report",
]


@dataclass(frozen=True)
class InstanceSegmentation:
    """Ground-truth per-pixel instance labels; 0 is background."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"instance labels must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("instance labels must be integers")
        if labels.min() < 0:
            raise ValueError("instance labels must be >= 0")
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def instance_ids(self) -> list[int]:
        return [int(v) for v in np.unique(self.labels) if v > 0]


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    predicted_class: int
    true_class: int
    group_id: Optional[int] = None


@dataclass(frozen=True)
class GroupedResults:
    """Per-sample predictions with optional group ids (sparse ids accepted)."""

    records: tuple[EvalRecord, ...]

    def __post_init__(self) -> None:
        records = tuple(self.records)
        if not records:
            raise ValueError("results must be nonempty")
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)


def maskset_to_partition(pred: MaskSet, shape: tuple[int, int]) -> np.ndarray:
    """Flatten possibly-overlapping masks into a per-pixel partition.

    Each pixel takes the last mask (in list order) that covers it; uncovered
    pixels form one extra cluster with id 0.  Mask k gets id k + 1.
    """
    if pred.shape is not None and pred.shape != shape:
        raise ValueError(f"predicted masks are {pred.shape}, expected {shape}")
    part = np.zeros(shape, dtype=np.int64)
    for k, mask in enumerate(pred):
        part[mask.bits] = k + 1
    return part


def _comb2(n: int) -> int:
    return n * (n - 1) // 2


def adjusted_rand_index(a: np.ndarray, b: np.ndarray) -> float:
    """ARI between two flat label arrays, from exact contingency pair counts.

    Degenerate cases where the expected and maximal index coincide (e.g.
    both sides a single cluster) return 1.0.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError("label arrays must be nonempty and equal-length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n_a = int(ai.max()) + 1
    n_b = int(bi.max()) + 1
    counts = np.bincount(ai * n_b + bi, minlength=n_a * n_b).reshape(n_a, n_b)

    index = sum(_comb2(int(v)) for v in counts.ravel())
    sum_a = sum(_comb2(int(v)) for v in counts.sum(axis=1))
    sum_b = sum(_comb2(int(v)) for v in counts.sum(axis=0))
    total = _comb2(a.size)
    if total == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, total)
    max_index = Fraction(sum_a + sum_b, 2)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def fg_ari(gt: InstanceSegmentation, pred: MaskSet) -> float:
    """Adjusted Rand index restricted to ground-truth foreground pixels."""
    part = maskset_to_partition(pred, gt.shape)
    fg = gt.labels > 0
    if not fg.any():
        raise ValueError("FG-ARI undefined: ground truth has no foreground pixels")
    return adjusted_rand_index(gt.labels[fg], part[fg])


def mbo(gt: InstanceSegmentation, pred: MaskSet) -> float:
    """Mean best overlap: per gt instance, the max IoU over predicted masks.

    IoU is taken over the full pixel grid (background pixels count against
    loose masks); the mean runs over ground-truth instances only.  An empty
    prediction set scores 0.0.
    """
    if pred.shape is not None and pred.shape != gt.shape:
        raise ValueError(f"predicted masks are {pred.shape}, expected {gt.shape}")
    ids = gt.instance_ids()
    if not ids:
        raise ValueError("mBO undefined: ground truth has no instances")
    if len(pred) == 0:
        return 0.0
    best_sum = 0.0
    for instance_id in ids:
        instance = gt.labels == instance_id
        best_sum += max(iou_bits(instance, m.bits) for m in pred)
    return best_sum / len(ids)


def accuracy(results: GroupedResults) -> float:
    """Fraction of records whose prediction matches the true class."""
    correct = sum(1 for r in results.records if r.predicted_class == r.true_class)
    return correct / len(results)


def worst_group_accuracy(results: GroupedResults) -> tuple[float, dict[int, float]]:
    """Minimum per-group accuracy, with the full per-group breakdown."""
    totals: dict[int, int] = {}
    corrects: dict[int, int] = {}
    for r in results.records:
        if r.group_id is None:
            raise ValueError(f"sample {r.sample_id}: missing group id")
        totals[r.group_id] = totals.get(r.group_id, 0) + 1
        if r.predicted_class == r.true_class:
            corrects[r.group_id] = corrects.get(r.group_id, 0) + 1
    per_group = {g: corrects.get(g, 0) / n for g, n in sorted(totals.items())}
    return min(per_group.values()), per_group


def common_counter_gap(
    common: GroupedResults, counter: GroupedResults
) -> tuple[float, float, float]:
    """Signed accuracy gap between the common and counter splits."""
    acc_common = accuracy(common)
    acc_counter = accuracy(counter)
    return acc_common - acc_counter, acc_common, acc_counter


def metric_report(
    metric: str,
    value: float,
    n_samples: int,
    per_group: Optional[dict[int, float]] = None,
) -> dict:
    """The JSON-ready report shape used by every metric emitter."""
    report: dict = {"metric": metric, "value": value, "n_samples": n_samples}
    if per_group is not None:
        report["per_group"] = {str(g): v for g, v in per_group.items()}
    return report
