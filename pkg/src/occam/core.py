"""Shared domain types and the pure numeric helpers built on them.

Images are channel-major float arrays in [0, 1], masks are boolean pixel
grids, probability vectors are validated (and renormalized) on construction.
Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "ImageTensor",
    "BinaryMask",
    "MaskSource",
    "MaskSet",
    "Embedding",
    "ClassProbabilities",
    "LabeledSample",
    "entropy",
    "softmax",
    "iou",
    "full_mask",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """An RGB or RGBA image: float values in [0, 1], laid out (channels, H, W)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] not in (3, 4):
            raise ValueError(f"image must be (3|4, H, W), got shape {data.shape}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ValueError("image must have H >= 1 and W >= 1")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must be finite and within [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BinaryMask:
    """A per-pixel boolean mask over an H x W grid."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            bits = bits.astype(bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _freeze(bits))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def area(self) -> int:
        return int(self.bits.sum())


class MaskSource(str, Enum):
    EXTERNAL_SEGMENTER = "external-segmenter"
    OCL_SLOTS = "ocl-slots"
    GROUND_TRUTH = "ground-truth"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class MaskSet:
    """An ordered list of candidate object masks sharing one image grid.

    Masks may overlap and need not tile the image; external segmenters
    routinely emit overlapping proposals.  The list may be empty (e.g. after
    filtering).
    """

    masks: tuple[BinaryMask, ...]
    source: MaskSource

    def __post_init__(self) -> None:
        masks = tuple(self.masks)
        shapes = {m.shape for m in masks}
        if len(shapes) > 1:
            raise ValueError(f"all masks must share one grid, got shapes {shapes}")
        object.__setattr__(self, "masks", masks)

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i: int) -> BinaryMask:
        return self.masks[i]

    @property
    def shape(self) -> Optional[tuple[int, int]]:
        return self.masks[0].shape if self.masks else None


@dataclass(frozen=True)
class Embedding:
    """A d-dimensional feature vector produced by an image encoder."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] < 1:
            raise ValueError(f"embedding must be a vector with d >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding values must be finite")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


# Tolerance for accepting slightly-off probability sums (float32 export
# roundoff); vectors further off than this are treated as corrupt.
PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ClassProbabilities:
    """A probability vector over >= 2 classes, optionally with its logits.

    Vectors whose sum deviates from 1 by at most ``PROB_SUM_TOL`` are
    renormalized on ingestion; anything further off is rejected.
    """

    probs: np.ndarray
    logits: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise ValueError(f"need a vector over >= 2 classes, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0 + PROB_SUM_TOL:
            raise ValueError("probabilities must be finite and within [0, 1]")
        total = probs.sum()
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, beyond tolerance {PROB_SUM_TOL}")
        object.__setattr__(self, "probs", _freeze(probs / total))
        if self.logits is not None:
            logits = np.asarray(self.logits, dtype=np.float64)
            if logits.shape != probs.shape or not np.all(np.isfinite(logits)):
                raise ValueError("logits must be finite and match the probability shape")
            object.__setattr__(self, "logits", _freeze(logits))

    @property
    def num_classes(self) -> int:
        return self.probs.shape[0]


BBox = tuple[int, int, int, int]  # (row0, col0, row1, col1), half-open


@dataclass(frozen=True)
class LabeledSample:
    """One dataset sample: an image (or a reference to one) plus its labels.

    ``group`` is required only when worst-group accuracy is requested;
    ``gt_masks`` / ``gt_bbox`` only by ground-truth-driven scoring and the
    foreground-detection benchmark.  By convention the first ground-truth
    mask is the foreground object.
    """

    id: str
    image: Union[ImageTensor, str]
    label: int
    group: Optional[int] = None
    gt_masks: Optional[MaskSet] = None
    gt_bbox: Optional[BBox] = None

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValueError(f"sample {self.id}: label must be >= 0")
        if self.gt_bbox is not None:
            r0, c0, r1, c1 = self.gt_bbox
            if not (0 <= r0 < r1 and 0 <= c0 < c1):
                raise ValueError(f"sample {self.id}: degenerate bbox {self.gt_bbox}")
            if isinstance(self.image, ImageTensor):
                if r1 > self.image.height or c1 > self.image.width:
                    raise ValueError(f"sample {self.id}: bbox {self.gt_bbox} exceeds image bounds")


def entropy(p: ClassProbabilities) -> float:
    """Shannon entropy of a probability vector, in nats (0 * ln 0 = 0)."""
    q = p.probs[p.probs > 0.0]
    return float(-(q * np.log(q)).sum())


def softmax(logits: Sequence[float] | np.ndarray) -> ClassProbabilities:
    """Numerically stable softmax; keeps the raw logits on the result."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"logits must be a vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    e = np.exp(z - z.max())
    return ClassProbabilities(probs=e / e.sum(), logits=z)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks; 0.0 when both are empty."""
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return iou_bits(a.bits, b.bits)


def iou_bits(a: np.ndarray, b: np.ndarray) -> float:
    """IoU on raw boolean arrays (internal fast path, no validation)."""
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(a, b).sum()) / union


def full_mask(height: int, width: int) -> BinaryMask:
    """The all-ones mask (the mask-free convention for alpha application)."""
    return BinaryMask(np.ones((height, width), dtype=bool))
