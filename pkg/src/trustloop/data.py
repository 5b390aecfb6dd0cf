"""IDX ingestion, deterministic image corruptions, and pool splitting.

Datasets are immutable bundles of flat [0,1] float images plus integer
labels.  Every example also carries a stable instance id (its index in the
originally loaded file) so that downstream leakage checks can intersect id
sets across training, gating, and evaluation pools.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    InsufficientData,
    PoolExhausted,
    TruncatedFile,
)
from .seeds import derive_seed, generator

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CORRUPTION_KINDS = ("contrast", "impulse", "shot", "gaussian")
DEFAULT_SEVERITY = 0.5


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable set of labeled grayscale images.

    images: (n, height*width) float64 rows in [0, 1]
    labels: (n,) int64, each < num_classes
    ids:    (n,) int64 stable instance ids
    """

    images: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    num_classes: int
    name: str = ""
    height: int = 28
    width: int = 28

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.images.ndim != 2 or self.images.shape[1] != self.height * self.width:
            raise ValueError("images must be (n, height*width)")
        if len(self.images) != len(self.labels) or len(self.labels) != len(self.ids):
            raise ValueError("images, labels, and ids must have equal length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        self.images.setflags(write=False)
        self.labels.setflags(write=False)
        self.ids.setflags(write=False)

    def __len__(self) -> int:
        return len(self.images)

    def image2d(self, i: int) -> np.ndarray:
        return self.images[i].reshape(self.height, self.width)

    def subset(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            images=self.images[indices].copy(),
            labels=self.labels[indices].copy(),
            ids=self.ids[indices].copy(),
            num_classes=self.num_classes,
            name=self.name if name is None else name,
            height=self.height,
            width=self.width,
        )

    def replace_images(self, images: np.ndarray, name: str | None = None) -> "Dataset":
        """Same labels/ids with new pixel content (corruption output)."""
        return Dataset(
            images=images,
            labels=self.labels.copy(),
            ids=self.ids.copy(),
            num_classes=self.num_classes,
            name=self.name if name is None else name,
            height=self.height,
            width=self.width,
        )


def concat(parts: list[Dataset], name: str = "") -> Dataset:
    first = parts[0]
    return Dataset(
        images=np.concatenate([p.images for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        ids=np.concatenate([p.ids for p in parts]),
        num_classes=first.num_classes,
        name=name or first.name,
        height=first.height,
        width=first.width,
    )


def from_arrays(
    images: np.ndarray,
    labels: np.ndarray,
    num_classes: int | None = None,
    name: str = "",
    height: int = 28,
    width: int = 28,
) -> Dataset:
    """Build a Dataset from raw arrays, assigning fresh sequential ids."""
    images = np.asarray(images, dtype=np.float64).reshape(len(labels), -1)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1 if len(labels) else 2)
    return Dataset(
        images=images,
        labels=labels,
        ids=np.arange(len(labels), dtype=np.int64),
        num_classes=num_classes,
        name=name,
        height=height,
        width=width,
    )


# --- IDX binary format -------------------------------------------------------

def _read_u32s(f, n, path):
    raw = f.read(4 * n)
    if len(raw) != 4 * n:
        raise TruncatedFile(f"{path}: header cut short")
    return struct.unpack(f">{n}I", raw)


def load_idx(
    images_path: str | Path,
    labels_path: str | Path,
    num_classes: int | None = None,
    name: str = "",
) -> Dataset:
    """Load a big-endian IDX image/label file pair; pixels scaled by /255."""
    images_path, labels_path = Path(images_path), Path(labels_path)

    with open(images_path, "rb") as f:
        (magic,) = _read_u32s(f, 1, images_path)
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"{images_path}: magic 0x{magic:08x}, want 0x{IDX_IMAGES_MAGIC:08x}")
        count, rows, cols = _read_u32s(f, 3, images_path)
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise TruncatedFile(f"{images_path}: expected {count * rows * cols} pixel bytes, got {len(raw)}")
        pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
        images = pixels.reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        (magic,) = _read_u32s(f, 1, labels_path)
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"{labels_path}: magic 0x{magic:08x}, want 0x{IDX_LABELS_MAGIC:08x}")
        (label_count,) = _read_u32s(f, 1, labels_path)
        raw = f.read(label_count)
        if len(raw) != label_count:
            raise TruncatedFile(f"{labels_path}: expected {label_count} label bytes, got {len(raw)}")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if count != label_count:
        raise CountMismatch(f"{count} images vs {label_count} labels")

    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1 if len(labels) else 2)
    return Dataset(
        images=images,
        labels=labels,
        ids=np.arange(count, dtype=np.int64),
        num_classes=num_classes,
        name=name or images_path.stem,
        height=rows,
        width=cols,
    )


def save_idx(dataset: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write the dataset back out as an IDX pair (pixels quantized to uint8)."""
    pixels = np.rint(dataset.images * 255.0).clip(0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, len(dataset), dataset.height, dataset.width))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(dataset)))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def write_corruption_sidecar(path: str | Path, kind: str, severity: float, seed: int) -> None:
    with open(path, "w") as f:
        json.dump({"kind": kind, "severity": severity, "seed": seed}, f, indent=2)
        f.write("\n")


# --- corruption generators ---------------------------------------------------

def corrupt(dataset: Dataset, kind: str, seed: int, severity: float = DEFAULT_SEVERITY) -> Dataset:
    """Apply one corruption to every image; labels and ids are untouched.

    contrast: pivot scaling about mid-gray, p' = 0.5 + (1-severity)(p-0.5)
    impulse:  a `severity` fraction of pixels forced to 0 or 1 equiprobably
    shot:     Poisson resampling p' = Poisson(p*lam)/lam, lam = 60(1-severity)+5
    gaussian: p' = clamp(p + N(0, severity*0.3))
    """
    if kind not in CORRUPTION_KINDS:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if not 0.0 < severity <= 1.0:
        raise ValueError(f"severity must be in (0, 1], got {severity}")

    rng = generator(seed)
    x = dataset.images

    if kind == "contrast":
        out = 0.5 + (1.0 - severity) * (x - 0.5)
    elif kind == "impulse":
        hit = rng.random(x.shape) < severity
        salt = (rng.random(x.shape) < 0.5).astype(np.float64)
        out = np.where(hit, salt, x)
    elif kind == "shot":
        lam = 60.0 * (1.0 - severity) + 5.0
        out = np.clip(rng.poisson(x * lam) / lam, 0.0, 1.0)
    else:  # gaussian
        out = np.clip(x + rng.normal(0.0, severity * 0.3, x.shape), 0.0, 1.0)

    return dataset.replace_images(out, name=f"{dataset.name}+{kind}")


def corrupt_mixed(
    dataset: Dataset,
    kinds: tuple[str, ...],
    seed: int,
    severity: float = DEFAULT_SEVERITY,
) -> Dataset:
    """Corrupt with a uniformly random kind per example (seed-deterministic)."""
    if not kinds:
        return dataset
    assignment = generator(derive_seed(seed, "assign")).integers(0, len(kinds), len(dataset))
    out = dataset.images.copy()
    for i, kind in enumerate(kinds):
        rows = np.flatnonzero(assignment == i)
        if len(rows) == 0:
            continue
        part = dataset.subset(rows)
        out[rows] = corrupt(part, kind, derive_seed(seed, "kind", kind), severity).images
    return dataset.replace_images(out, name=f"{dataset.name}+mixed")


# --- splitting ---------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_test: int
    n_inference_pool: int
    n_eval_corrupted: int
    seed: int

    def __post_init__(self):
        for label, n in (
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("n_inference_pool", self.n_inference_pool),
            ("n_eval_corrupted", self.n_eval_corrupted),
        ):
            if n <= 0:
                raise ValueError(f"{label} must be > 0, got {n}")

    @property
    def total(self) -> int:
        return self.n_train + self.n_test + self.n_inference_pool + self.n_eval_corrupted


@dataclass(frozen=True)
class Split:
    train: Dataset            # clean, for initial training
    test: Dataset             # clean held-out
    inference_pool: Dataset   # corrupted, consumed batch by batch
    eval_corrupted: Dataset   # corrupted held-out, fixed for evaluation


def split(
    dataset: Dataset,
    spec: SplitSpec,
    corruptions: tuple[str, ...] = CORRUPTION_KINDS,
    severity: float = DEFAULT_SEVERITY,
) -> Split:
    """Partition into disjoint train/test/pool/eval; pool and eval corrupted.

    The shuffle and both corruption passes draw from independent substreams
    of spec.seed, so equal specs always give element-wise equal splits.
    """
    if spec.total > len(dataset):
        raise InsufficientData(f"split needs {spec.total} examples, dataset has {len(dataset)}")

    perm = generator(derive_seed(spec.seed, "shuffle")).permutation(len(dataset))
    a = spec.n_train
    b = a + spec.n_test
    c = b + spec.n_inference_pool
    d = c + spec.n_eval_corrupted

    train = dataset.subset(perm[:a], name=f"{dataset.name}/train")
    test = dataset.subset(perm[a:b], name=f"{dataset.name}/test")
    pool = dataset.subset(perm[b:c], name=f"{dataset.name}/pool")
    evalc = dataset.subset(perm[c:d], name=f"{dataset.name}/eval")

    pool = corrupt_mixed(pool, corruptions, derive_seed(spec.seed, "pool-corrupt"), severity)
    evalc = corrupt_mixed(evalc, corruptions, derive_seed(spec.seed, "eval-corrupt"), severity)
    return Split(train=train, test=test, inference_pool=pool, eval_corrupted=evalc)


def iteration_batch(pool: Dataset, t: int, batch_size: int) -> Dataset:
    """Slice [t*batch_size, (t+1)*batch_size) of the pre-shuffled pool."""
    start = t * batch_size
    end = start + batch_size
    if end > len(pool):
        raise PoolExhausted(f"batch {t} needs items [{start}, {end}) but pool has {len(pool)}")
    return pool.subset(np.arange(start, end), name=f"{pool.name}/batch{t}")
