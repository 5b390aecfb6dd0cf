import numpy as np
import pytest

from trustloop.data import Dataset
from trustloop.synth import make_synthetic_dataset


@pytest.fixture(scope="session")
def glyphs_small() -> Dataset:
    """1,200 synthetic glyph images; enough for mini end-to-end runs."""
    return make_synthetic_dataset(1200, seed=11)


def toy_dataset(n=60, num_classes=3, dim=16, seed=0, spread=0.3) -> Dataset:
    """Gaussian class blobs on a `dim`-pixel image grid (dim = h*w)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = np.arange(n) % num_classes
    centers = rng.random((num_classes, dim))
    images = np.clip(centers[labels] + rng.normal(0, spread, (n, dim)), 0.0, 1.0)
    h = int(np.sqrt(dim))
    assert h * h == dim
    return Dataset(
        images=images,
        labels=labels.astype(np.int64),
        ids=np.arange(n, dtype=np.int64),
        num_classes=num_classes,
        height=h,
        width=h,
    )
