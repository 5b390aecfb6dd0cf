"""Shear-mapping augmentation for newly labeled images.

A horizontal shear about the image center distorts shape while preserving
area (the shear matrix [[1, lambda], [0, 1]] has determinant 1), so digit
and garment semantics survive.  Resampling is inverse-mapped bilinear with
zero fill outside the frame; lambda = 0 reproduces the input bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .seeds import generator


@dataclass(frozen=True)
class ShearParams:
    lambda_lo: float = -0.2
    lambda_hi: float = 0.2
    copies_per_example: int = 4
    seed: int = 0

    def __post_init__(self):
        if not (abs(self.lambda_lo) < 1.0 and abs(self.lambda_hi) < 1.0):
            raise ValueError("lambda bounds must have magnitude < 1")
        if self.lambda_lo > self.lambda_hi:
            raise ValueError("lambda_lo must be <= lambda_hi")
        if self.copies_per_example < 0:
            raise ValueError("copies_per_example must be >= 0")


def shear(image: np.ndarray, lam: float) -> np.ndarray:
    """Shear a 2-D grayscale image horizontally about its center."""
    if abs(lam) >= 1.0:
        raise ValueError(f"|lambda| must be < 1, got {lam}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    cy = (h - 1) / 2.0

    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    # inverse map: output (r, c) samples input column c - lam*(r - cy)
    src_c = cols[None, :] - lam * (rows[:, None] - cy)

    c0 = np.floor(src_c).astype(np.int64)
    frac = src_c - c0
    c1 = c0 + 1

    def sample(col_idx: np.ndarray) -> np.ndarray:
        inside = (col_idx >= 0) & (col_idx < w)
        clipped = np.clip(col_idx, 0, w - 1)
        vals = image[np.arange(h)[:, None], clipped]
        return np.where(inside, vals, 0.0)

    out = (1.0 - frac) * sample(c0) + frac * sample(c1)
    return out


def augment_labeled(examples: Dataset, params: ShearParams) -> Dataset:
    """Originals plus `copies_per_example` sheared copies of each, labels
    copied unchanged.  Lambda draws are uniform over the configured range
    and deterministic for a fixed seed."""
    m = params.copies_per_example
    if m == 0 or len(examples) == 0:
        return examples

    rng = generator(params.seed)
    h, w = examples.height, examples.width
    images = [examples.images]
    labels = [examples.labels]
    ids = [examples.ids]
    for i in range(len(examples)):
        src = examples.images[i].reshape(h, w)
        copies = np.empty((m, h * w))
        for j in range(m):
            lam = rng.uniform(params.lambda_lo, params.lambda_hi)
            copies[j] = shear(src, lam).ravel()
        images.append(copies)
        labels.append(np.full(m, examples.labels[i], dtype=np.int64))
        ids.append(np.full(m, examples.ids[i], dtype=np.int64))

    return Dataset(
        images=np.concatenate(images),
        labels=np.concatenate(labels),
        ids=np.concatenate(ids),
        num_classes=examples.num_classes,
        name=f"{examples.name}+sheared",
        height=h,
        width=w,
    )
