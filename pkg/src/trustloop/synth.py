"""Procedural 28x28 digit-glyph dataset for fully offline runs.

Renders a classic 5x7 bitmap font at 3x scale with per-example jitter
(placement, shear, stroke intensity, pixel noise), giving a learnable
10-class problem with MNIST-like geometry.  Used by tests and by the
`synth` CLI subcommand; any real IDX pair (e.g. MNIST itself) drops in the
same way.
"""

from __future__ import annotations

import numpy as np

from .augment import shear
from .data import Dataset
from .seeds import derive_seed, generator

GLYPHS = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],  # 0
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],  # 1
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],  # 2
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],  # 3
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],  # 4
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],  # 5
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],  # 6
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],  # 7
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],  # 8
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],  # 9
]

_SCALE = 3  # 5x7 glyph -> 15x21 stamp on the 28x28 canvas


def _stamps() -> np.ndarray:
    out = np.zeros((10, 7 * _SCALE, 5 * _SCALE))
    for digit, rows in enumerate(GLYPHS):
        bitmap = np.array([[c == "1" for c in row] for row in rows], dtype=np.float64)
        out[digit] = np.kron(bitmap, np.ones((_SCALE, _SCALE)))
    return out


def make_synthetic_dataset(n: int, seed: int, name: str = "synth-digits") -> Dataset:
    """n jittered glyph images with uniformly random digit labels."""
    rng = generator(derive_seed(seed, "synth"))
    stamps = _stamps()
    sh, sw = stamps.shape[1:]

    labels = rng.integers(0, 10, n)
    images = np.zeros((n, 28, 28))
    for i in range(n):
        canvas = np.zeros((28, 28))
        y0 = 3 + rng.integers(-3, 4)
        x0 = 6 + rng.integers(-4, 5)
        canvas[y0 : y0 + sh, x0 : x0 + sw] = stamps[labels[i]]
        canvas = shear(canvas, rng.uniform(-0.3, 0.3))
        canvas *= rng.uniform(0.55, 1.0)
        canvas += rng.normal(0.0, 0.12, canvas.shape)
        images[i] = np.clip(canvas, 0.0, 1.0)

    return Dataset(
        images=images.reshape(n, 28 * 28),
        labels=labels.astype(np.int64),
        ids=np.arange(n, dtype=np.int64),
        num_classes=10,
        name=name,
    )
