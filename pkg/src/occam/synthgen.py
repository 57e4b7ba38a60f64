"""Procedural spurious-correlation scenes with exact ground truth.

Each sample is one foreground shape (class = color + shape family) on a
solid background whose color is correlated with the class at rate rho, plus
optional distractor shapes.  Shapes are rendered without anti-aliasing so
ground-truth masks, boxes, and instance maps are pixel-exact.  All colors
sit on the 8-bit grid, making the PNG interchange round-trip bit-exact.

Hue layout (8 equal bins): object colors live in bins 1/3/5, background
colors in bins 2/4/6, distractors in bin 7 and bin 0 stays free for the
gray used by mask application.  That separation is what lets a tiny color
histogram act as a stand-in encoder.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .backend import Dataset, masks_from_instances
from .core import ImageTensor, LabeledSample
from .metrics import InstanceSegmentation

__all__ = ["SynthSpec", "generate", "counter_split", "group_id", "group_label"]

_OBJECT_HUE_BINS = (1, 3, 5)
_BACKGROUND_HUE_BINS = (2, 4, 6)
_DISTRACTOR_HUE_BIN = 7
_SHAPES = ("rect", "circle", "triangle")

Color = tuple[float, float, float]


def _snap(value: float) -> float:
    return round(value * 255.0) / 255.0


def _hue_color(hue_bin: int, s: float = 0.85, v: float = 0.9) -> Color:
    r, g, b = colorsys.hsv_to_rgb((hue_bin + 0.5) / 8.0, s, v)
    return (_snap(r), _snap(g), _snap(b))


@dataclass(frozen=True)
class SynthSpec:
    """Configuration of one synthetic split; the seed fully determines output."""

    n_samples: int
    height: int = 64
    width: int = 64
    n_classes: int = 3
    correlation: float = 1.0  # probability the background matches the class palette
    distractors: tuple[int, int] = (0, 2)
    seed: int = 0
    object_size_range: tuple[float, float] = (0.5, 0.7)  # fraction of min(H, W)
    distractor_size_range: tuple[float, float] = (0.12, 0.2)
    object_colors: Optional[tuple[Color, ...]] = None
    background_colors: Optional[tuple[Color, ...]] = None

    def __post_init__(self) -> None:
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.height < 16 or self.width < 16:
            raise ValueError("image size must be at least 16x16")
        if not (0.0 <= self.correlation <= 1.0):
            raise ValueError("correlation must be in [0, 1]")
        if not (2 <= self.n_classes):
            raise ValueError("need at least 2 classes")
        if self.object_colors is None and self.n_classes > len(_OBJECT_HUE_BINS):
            raise ValueError(
                f"derived palettes support up to {len(_OBJECT_HUE_BINS)} classes; "
                "pass explicit object/background colors beyond that"
            )
        if not (0 <= self.distractors[0] <= self.distractors[1]):
            raise ValueError("distractor count range must be 0 <= lo <= hi")
        for lo, hi in (self.object_size_range, self.distractor_size_range):
            if not (0.0 < lo <= hi):
                raise ValueError("size ranges must satisfy 0 < lo <= hi")

    def palette(self) -> tuple[tuple[Color, ...], tuple[Color, ...]]:
        objects = self.object_colors or tuple(
            _hue_color(_OBJECT_HUE_BINS[c]) for c in range(self.n_classes)
        )
        backgrounds = self.background_colors or tuple(
            _hue_color(_BACKGROUND_HUE_BINS[c], s=0.8, v=0.85) for c in range(self.n_classes)
        )
        if len(objects) != self.n_classes or len(backgrounds) != self.n_classes:
            raise ValueError("palettes must provide one color per class")
        return objects, backgrounds


def group_id(label: int, matched: bool) -> int:
    """Dense (class, background-type) group id; even = matched background."""
    return 2 * label + (0 if matched else 1)


def group_label(gid: int) -> str:
    return f"class{gid // 2}-{'common' if gid % 2 == 0 else 'counter'}"


def _shape_mask(
    kind: str, height: int, width: int, r0: int, c0: int, size: int
) -> np.ndarray:
    bits = np.zeros((height, width), dtype=bool)
    if kind == "rect":
        bits[r0 : r0 + size, c0 : c0 + size] = True
    elif kind == "circle":
        radius = size / 2.0
        cy, cx = r0 + radius - 0.5, c0 + radius - 0.5
        rr, cc = np.ogrid[:height, :width]
        bits[(rr - cy) ** 2 + (cc - cx) ** 2 <= radius**2] = True
    elif kind == "triangle":
        # Isoceles, apex up: row t spans a width growing linearly to the base.
        for t in range(size):
            half = int(round((t + 1) / size * size / 2.0))
            mid = c0 + size // 2
            bits[r0 + t, max(c0, mid - half) : min(c0 + size, mid + half + 1)] = True
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return bits


def _place_shape(
    rng: np.random.Generator,
    kind: str,
    height: int,
    width: int,
    size_range: tuple[float, float],
    avoid: Optional[np.ndarray],
) -> Optional[np.ndarray]:
    base = min(height, width)
    lo = max(3, int(round(size_range[0] * base)))
    hi = max(3, int(round(size_range[1] * base)))
    if hi > base - 2:
        raise ValueError(f"shape size {hi} does not fit a {height}x{width} image")
    # Keep a 1-pixel border margin so shapes never touch the image boundary.
    for _ in range(20):
        size = int(rng.integers(lo, hi + 1))
        r0 = int(rng.integers(1, height - size))
        c0 = int(rng.integers(1, width - size))
        bits = _shape_mask(kind, height, width, r0, c0, size)
        if avoid is None or not (bits & avoid).any():
            return bits
    return None


def _make_sample(
    spec: SynthSpec, index: int, split_code: int
) -> tuple[LabeledSample, InstanceSegmentation]:
    rng = np.random.default_rng([spec.seed, split_code, index])
    objects, backgrounds = spec.palette()
    label = index % spec.n_classes

    matched = bool(rng.random() < spec.correlation)
    if matched:
        bg_class = label
    else:
        others = [c for c in range(spec.n_classes) if c != label]
        bg_class = others[int(rng.integers(0, len(others)))]

    fg_bits = _place_shape(
        rng, _SHAPES[label % len(_SHAPES)], spec.height, spec.width, spec.object_size_range, None
    )
    if fg_bits is None:
        raise ValueError("could not place the foreground shape")

    n_distractors = int(rng.integers(spec.distractors[0], spec.distractors[1] + 1))
    occupied = fg_bits.copy()
    distractor_bits = []
    for _ in range(n_distractors):
        kind = _SHAPES[int(rng.integers(0, len(_SHAPES)))]
        bits = _place_shape(
            rng, kind, spec.height, spec.width, spec.distractor_size_range, occupied
        )
        if bits is None:
            continue  # crowded scene: silently drop this distractor
        distractor_bits.append(bits)
        occupied |= bits

    image = np.empty((3, spec.height, spec.width), dtype=np.float64)
    image[:] = np.asarray(backgrounds[bg_class])[:, None, None]
    for j, bits in enumerate(distractor_bits):
        value = _snap(0.65 + 0.1 * (j % 3))
        color = _hue_color(_DISTRACTOR_HUE_BIN, s=0.75, v=value)
        image[:, bits] = np.asarray(color)[:, None]
    image[:, fg_bits] = np.asarray(objects[label])[:, None]

    seg = np.zeros((spec.height, spec.width), dtype=np.int64)
    for j, bits in enumerate(distractor_bits):
        seg[bits] = j + 2
    seg[fg_bits] = 1
    gt_seg = InstanceSegmentation(seg)

    rows = np.flatnonzero(fg_bits.any(axis=1))
    cols = np.flatnonzero(fg_bits.any(axis=0))
    bbox = (int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)

    sample = LabeledSample(
        id=f"s{index:05d}",
        image=ImageTensor(image),
        label=label,
        group=group_id(label, matched),
        gt_masks=masks_from_instances(gt_seg),
        gt_bbox=bbox,
    )
    return sample, gt_seg


def generate(spec: SynthSpec, split_code: int = 0) -> Dataset:
    """Generate a dataset split; per-sample seeds make this order-independent."""
    samples = []
    masksets = {}
    gt_segs = {}
    for index in range(spec.n_samples):
        sample, gt_seg = _make_sample(spec, index, split_code)
        samples.append(sample)
        masksets[sample.id] = sample.gt_masks
        gt_segs[sample.id] = gt_seg
    class_names = [f"class{c}" for c in range(spec.n_classes)]
    group_names = [group_label(g) for g in range(2 * spec.n_classes)]
    return Dataset(
        samples=samples,
        masksets=masksets,
        gt_segs=gt_segs,
        class_names=class_names,
        group_map=None,
        group_names=group_names,
    )


def counter_split(spec: SynthSpec) -> tuple[Dataset, Dataset]:
    """A (common, counter) pair: rho 1 vs 0 with identical class balance."""
    common = generate(replace(spec, correlation=1.0), split_code=1)
    counter = generate(replace(spec, correlation=0.0), split_code=2)
    return common, counter
