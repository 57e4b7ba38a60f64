"""Candidate-mask filtering and mask application.

Filtering drops masks that are too small, too fragmented, or that look like
background (cover most of the image border key points).  Application turns
an (image, mask) pair into the tensor an encoder sees: either a gray-
background square crop resized to a target resolution, or the original RGB
with the mask appended as an alpha channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from .core import BinaryMask, ImageTensor, MaskSet

__all__ = [
    "FilterConfig",
    "GrayBgCrop",
    "AlphaChannel",
    "ApplicationMode",
    "AppliedImage",
    "CropGeometry",
    "filter_masks",
    "connected_components",
    "key_points",
    "crop_geometry",
    "gray_bg_square",
    "bilinear_resize",
    "apply_gray_bg_crop",
    "apply_alpha",
    "apply_mask",
]

# Full-image application (the no-mask fallback) is recorded under this index.
FULL_IMAGE_INDEX = -1


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for the three candidate-mask filtering rules.

    A mask survives iff it (1) covers at least ``min_area_fraction`` of the
    image, (2) has at most ``max_components`` connected components, and
    (3) covers fewer than ``keypoint_threshold`` of the 8 image key points
    (4 corners + 4 side centers).
    """

    min_area_fraction: float = 0.001
    max_components: int = 30
    keypoint_threshold: int = 6
    keypoint_total: int = 8
    connectivity: int = 8  # component connectivity; 4 also supported

    def __post_init__(self) -> None:
        if not (0.0 < self.min_area_fraction < 1.0):
            raise ValueError("min_area_fraction must be in (0, 1)")
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.keypoint_total != 8:
            raise ValueError("only the 8 standard key points are defined")
        if not (1 <= self.keypoint_threshold <= self.keypoint_total):
            raise ValueError("keypoint_threshold must be within [1, keypoint_total]")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class GrayBgCrop:
    """Gray background + square crop + resize application mode."""

    target_h: int = 224
    target_w: int = 224
    gray_value: float = 0.5

    def __post_init__(self) -> None:
        if self.target_h < 1 or self.target_w < 1:
            raise ValueError("target dimensions must be >= 1")
        if not (0.0 <= self.gray_value <= 1.0):
            raise ValueError("gray_value must be in [0, 1]")


@dataclass(frozen=True)
class AlphaChannel:
    """Append the mask as an alpha channel; the RGB planes pass through."""


ApplicationMode = Union[GrayBgCrop, AlphaChannel]


@dataclass(frozen=True)
class AppliedImage:
    """The result of applying one mask to an image.

    ``source_mask_index`` is the candidate index the mask came from, or
    ``FULL_IMAGE_INDEX`` for a full-image (fallback) application.
    """

    image: ImageTensor
    source_mask_index: int


def key_points(height: int, width: int) -> list[tuple[int, int]]:
    """The 8 border key points: 4 corners and 4 side centers."""
    h1, w1 = height - 1, width - 1
    return [
        (0, 0),
        (0, w1),
        (h1, 0),
        (h1, w1),
        (0, width // 2),
        (h1, width // 2),
        (height // 2, 0),
        (height // 2, w1),
    ]


_STRUCTURE_8 = np.ones((3, 3), dtype=bool)
_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def connected_components(mask: BinaryMask, connectivity: int = 8) -> int:
    """Number of connected components of set pixels (0 for an empty mask)."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    _, count = ndimage.label(mask.bits, structure=structure)
    return int(count)


def filter_masks(
    masks: MaskSet, image_dims: tuple[int, int], cfg: FilterConfig | None = None
) -> MaskSet:
    """Apply the three filtering rules, preserving order and identity."""
    cfg = cfg or FilterConfig()
    height, width = image_dims
    if masks.shape is not None and masks.shape != (height, width):
        raise ValueError(f"masks are {masks.shape}, image is {(height, width)}")
    min_area = cfg.min_area_fraction * height * width
    points = key_points(height, width)

    kept = []
    for mask in masks:
        if mask.area < min_area:
            continue
        if connected_components(mask, cfg.connectivity) > cfg.max_components:
            continue
        covered = sum(1 for r, c in points if mask.bits[r, c])
        if covered >= cfg.keypoint_threshold:
            continue
        kept.append(mask)
    return MaskSet(masks=tuple(kept), source=masks.source)


@dataclass(frozen=True)
class CropGeometry:
    """Tight mask bbox and the square it expands to (half-open coordinates).

    The square may extend past the image bounds; out-of-bounds area is
    gray-filled at application time.
    """

    bbox: tuple[int, int, int, int]
    square: tuple[int, int, int, int]

    @property
    def side(self) -> int:
        r0, _, r1, _ = self.square
        return r1 - r0


def crop_geometry(mask: BinaryMask) -> CropGeometry:
    """Tight bounding rectangle of the mask, expanded to a centered square.

    The shorter side grows symmetrically about the rectangle center; an odd
    leftover pixel goes to the bottom/right.
    """
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise ValueError("empty mask not applicable")
    r0, r1 = int(rows[0]), int(rows[-1]) + 1
    c0, c1 = int(cols[0]), int(cols[-1]) + 1
    side = max(r1 - r0, c1 - c0)
    sq_r0 = r0 - (side - (r1 - r0)) // 2
    sq_c0 = c0 - (side - (c1 - c0)) // 2
    return CropGeometry(bbox=(r0, c0, r1, c1), square=(sq_r0, sq_c0, sq_r0 + side, sq_c0 + side))


def gray_bg_square(image: ImageTensor, mask: BinaryMask, gray: float) -> np.ndarray:
    """The unresized intermediate: gray background, square crop around the mask.

    Returns a (3, side, side) array in which every pixel outside the mask
    equals ``gray`` exactly.
    """
    if image.channels != 3:
        raise ValueError("gray-background application expects a 3-channel image")
    if mask.shape != (image.height, image.width):
        raise ValueError(f"mask is {mask.shape}, image is {(image.height, image.width)}")
    geom = crop_geometry(mask)
    grayed = np.where(mask.bits[None, :, :], image.data, gray)

    r0, c0, r1, c1 = geom.square
    side = geom.side
    out = np.full((3, side, side), gray, dtype=np.float64)
    src_r0, src_r1 = max(r0, 0), min(r1, image.height)
    src_c0, src_c1 = max(c0, 0), min(c1, image.width)
    out[:, src_r0 - r0 : src_r1 - r0, src_c0 - c0 : src_c1 - c0] = grayed[
        :, src_r0:src_r1, src_c0:src_c1
    ]
    return out


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) array using half-pixel sample centers.

    The blend is written in delta form so constant regions are reproduced
    bit-exactly.
    """
    c, h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]

    v00 = img[:, y0[:, None], x0[None, :]]
    v01 = img[:, y0[:, None], x1[None, :]]
    v10 = img[:, y1[:, None], x0[None, :]]
    v11 = img[:, y1[:, None], x1[None, :]]
    return v00 + wy * (v10 - v00) + wx * (v01 - v00) + wy * wx * (v11 - v10 - v01 + v00)


def apply_gray_bg_crop(
    image: ImageTensor,
    mask: BinaryMask,
    target: tuple[int, int] = (224, 224),
    gray: float = 0.5,
    mask_index: int = FULL_IMAGE_INDEX,
) -> AppliedImage:
    """Gray out the background, crop the mask's centered square, and resize."""
    square = gray_bg_square(image, mask, gray)
    resized = np.clip(bilinear_resize(square, target[0], target[1]), 0.0, 1.0)
    return AppliedImage(image=ImageTensor(resized), source_mask_index=mask_index)


def apply_alpha(
    image: ImageTensor, mask: BinaryMask, mask_index: int = FULL_IMAGE_INDEX
) -> AppliedImage:
    """Append the mask as a 0/1 alpha channel; RGB planes are untouched."""
    if image.channels != 3:
        raise ValueError("alpha application expects a 3-channel image")
    if mask.shape != (image.height, image.width):
        raise ValueError(f"mask is {mask.shape}, image is {(image.height, image.width)}")
    alpha = mask.bits.astype(np.float64)[None, :, :]
    return AppliedImage(
        image=ImageTensor(np.concatenate([image.data, alpha], axis=0)),
        source_mask_index=mask_index,
    )


def apply_mask(
    image: ImageTensor, mask: BinaryMask, mode: ApplicationMode, mask_index: int
) -> AppliedImage:
    """Dispatch to the configured application mode."""
    if isinstance(mode, GrayBgCrop):
        return apply_gray_bg_crop(
            image, mask, (mode.target_h, mode.target_w), mode.gray_value, mask_index
        )
    if isinstance(mode, AlphaChannel):
        return apply_alpha(image, mask, mask_index)
    raise TypeError(f"unknown application mode: {mode!r}")
