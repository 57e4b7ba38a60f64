import numpy as np
import pytest

from occam.core import BinaryMask, ImageTensor, MaskSet, MaskSource

# Filled by the acceptance suite; printed at the end of the run.
ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, ok in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}")


def make_image(height=16, width=16, value=0.25, channels=3):
    return ImageTensor(np.full((channels, height, width), value, dtype=np.float64))


def make_mask(height, width, boxes):
    """Mask set from (r0, c0, r1, c1) half-open boxes, all OR-ed together."""
    bits = np.zeros((height, width), dtype=bool)
    for r0, c0, r1, c1 in boxes:
        bits[r0:r1, c0:c1] = True
    return BinaryMask(bits)


def random_mask(rng, height, width, density=0.3):
    return BinaryMask(rng.random((height, width)) < density)


def make_maskset(masks, source=MaskSource.EXTERNAL_SEGMENTER):
    return MaskSet(masks=tuple(masks), source=source)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
