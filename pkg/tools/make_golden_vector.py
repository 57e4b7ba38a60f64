"""Regenerate the shared crop-resize golden vector under exporter/golden/.

The expected output is computed from the *decoded* 8-bit input so that any
implementation starting from the same PNG bytes can reproduce it.
"""

import json
from pathlib import Path

import numpy as np

from occam.backend import read_image_png, read_mask_png, write_image_png, write_mask_png
from occam.core import BinaryMask, ImageTensor
from occam.maskops import apply_gray_bg_crop

GOLDEN = Path(__file__).resolve().parent.parent / "exporter" / "golden"
TARGET = (40, 40)
GRAY = 0.5


def build_input() -> ImageTensor:
    rng = np.random.default_rng(20240401)
    data = np.zeros((3, 48, 64))
    data[0] = np.linspace(0.05, 0.95, 48)[:, None]
    data[1] = np.linspace(0.1, 0.9, 64)[None, :]
    data[2] = 0.3
    data[:, 8:20, 40:60] = np.array([0.9, 0.2, 0.1])[:, None, None]
    data[:, 30:44, 6:26] = np.array([0.15, 0.7, 0.35])[:, None, None]
    noise = rng.uniform(-0.04, 0.04, size=data.shape)
    return ImageTensor(np.clip(data + noise, 0.0, 1.0))


def build_mask() -> BinaryMask:
    bits = np.zeros((48, 64), dtype=bool)
    bits[2:18, 36:62] = True  # near the top edge: the square clips out of bounds
    bits[6:10, 44:54] = False  # hole
    rr, cc = np.ogrid[:48, :64]
    bits[(rr - 16) ** 2 + (cc - 40) ** 2 <= 36] = True
    return BinaryMask(bits)


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    write_image_png(GOLDEN / "input.png", build_input())
    write_mask_png(GOLDEN / "mask.png", build_mask())

    image = read_image_png(GOLDEN / "input.png")  # start from the quantized data
    mask = read_mask_png(GOLDEN / "mask.png")
    applied = apply_gray_bg_crop(image, mask, target=TARGET, gray=GRAY)
    write_image_png(GOLDEN / "expected.png", applied.image)
    (GOLDEN / "meta.json").write_text(
        json.dumps({"target_h": TARGET[0], "target_w": TARGET[1], "gray": GRAY}, indent=2) + "\n"
    )
    print(f"golden vector written under {GOLDEN}")


if __name__ == "__main__":
    main()
