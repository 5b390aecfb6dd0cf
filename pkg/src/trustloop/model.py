"""Dense softmax classifier trained with warm-startable minibatch SGD.

Architecture is fixed at input -> hidden (ReLU) -> classes (softmax).
Training accepts an optional incumbent model whose weights seed the
optimization (warm start); the returned model's version counter is then
one above the incumbent's.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .blobio import read_blob_file, write_blob_file
from .data import Dataset
from .errors import EmptyDataset, ShapeMismatch
from .seeds import derive_seed, generator

# An epoch is accepted only if full-set loss did not grow beyond this.
LOSS_MONOTONE_TOL = 1e-6
# On a regressing epoch: restore weights, halve the step, retry.
MAX_LR_BACKOFFS = 12


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_units: int = 128
    epochs: int = 20
    learning_rate: float = 0.01
    momentum: float = 0.9
    minibatch: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


class Classifier:
    """Trained weights plus a version counter bumped on every retrain."""

    def __init__(self, w1, b1, w2, b2, version: int = 0, seed: int | None = None):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.version = version
        self.seed = seed
        self.epoch_losses: list[float] = []

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    def params(self):
        return self.w1, self.b1, self.w2, self.b2


def zero_classifier(input_dim: int, hidden_units: int, num_classes: int) -> Classifier:
    """All-zero weights; predicts the uniform distribution everywhere."""
    return Classifier(
        np.zeros((input_dim, hidden_units)),
        np.zeros(hidden_units),
        np.zeros((hidden_units, num_classes)),
        np.zeros(num_classes),
    )


def _forward(clf: Classifier, x: np.ndarray):
    z1 = x @ clf.w1 + clf.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ clf.w2 + clf.b2
    return z1, a1, z2


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba_batch(clf: Classifier, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[1] != clf.input_dim:
        raise ShapeMismatch(f"expected (n, {clf.input_dim}) images, got {images.shape}")
    _, _, z2 = _forward(clf, images)
    return _softmax(z2)


def predict_proba(clf: Classifier, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64).ravel()
    if image.shape[0] != clf.input_dim:
        raise ShapeMismatch(f"expected image of length {clf.input_dim}, got {image.shape[0]}")
    return predict_proba_batch(clf, image[None, :])[0]


def predict_classes(clf: Classifier, images: np.ndarray) -> np.ndarray:
    # argmax breaks ties toward the lowest class index
    return predict_proba_batch(clf, images).argmax(axis=1)


def accuracy(clf: Classifier, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise EmptyDataset("accuracy needs at least one example")
    return float((predict_classes(clf, dataset.images) == dataset.labels).mean())


def cross_entropy(clf: Classifier, images: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy via log-sum-exp (no clipping, exact for grad checks)."""
    _, _, z2 = _forward(clf, images)
    zmax = z2.max(axis=1)
    lse = zmax + np.log(np.exp(z2 - zmax[:, None]).sum(axis=1))
    return float((lse - z2[np.arange(len(labels)), labels]).mean())


def loss_gradients(clf: Classifier, images: np.ndarray, labels: np.ndarray):
    """Analytic gradients of mean cross-entropy w.r.t. (w1, b1, w2, b2)."""
    n = len(labels)
    z1, a1, z2 = _forward(clf, images)
    probs = _softmax(z2)
    dz2 = probs
    dz2[np.arange(n), labels] -= 1.0
    dz2 /= n
    gw2 = a1.T @ dz2
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ clf.w2.T
    dz1 = da1 * (z1 > 0.0)
    gw1 = images.T @ dz1
    gb1 = dz1.sum(axis=0)
    return gw1, gb1, gw2, gb2


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Content-hash sort so training is invariant to input row order.

    Rows with identical (image, label) content are interchangeable, so the
    stable tie-break cannot affect the numerics."""
    keys = np.empty(len(y), dtype=np.uint64)
    for i in range(len(y)):
        digest = hashlib.blake2s(
            x[i].tobytes() + struct.pack("<q", int(y[i])), digest_size=8
        ).digest()
        keys[i] = int.from_bytes(digest, "big")
    return np.argsort(keys, kind="stable")


def train(train_set: Dataset, config: ClassifierConfig, init: Classifier | None = None) -> Classifier:
    """Fit (or warm-start refit) the classifier on `train_set`.

    Full-set loss is checked after every epoch; an epoch that regresses
    beyond LOSS_MONOTONE_TOL is rolled back and retried at half the step
    size, so the reported epoch losses are non-increasing by construction.
    """
    if len(train_set) == 0:
        raise EmptyDataset("train needs a nonempty dataset")

    canon = _canonical_order(train_set.images, train_set.labels)
    x, y = train_set.images[canon], train_set.labels[canon]
    num_classes = train_set.num_classes
    input_dim = x.shape[1]

    if init is not None:
        if (
            init.input_dim != input_dim
            or init.num_classes != num_classes
            or init.hidden_units != config.hidden_units
        ):
            raise ShapeMismatch(
                f"init is {init.input_dim}->{init.hidden_units}->{init.num_classes}, "
                f"need {input_dim}->{config.hidden_units}->{num_classes}"
            )
        clf = Classifier(
            init.w1.copy(), init.b1.copy(), init.w2.copy(), init.b2.copy(),
            version=init.version + 1, seed=config.seed,
        )
    else:
        rng = generator(derive_seed(config.seed, "init"))
        h = config.hidden_units
        clf = Classifier(
            rng.normal(0.0, np.sqrt(2.0 / input_dim), (input_dim, h)),
            np.zeros(h),
            rng.normal(0.0, np.sqrt(2.0 / h), (h, num_classes)),
            np.zeros(num_classes),
            version=0,
            seed=config.seed,
        )

    velocity = [np.zeros_like(p) for p in clf.params()]
    lr = config.learning_rate
    prev_loss = cross_entropy(clf, x, y)
    losses: list[float] = []
    n = len(train_set)

    for epoch in range(config.epochs):
        accepted = False
        for attempt in range(MAX_LR_BACKOFFS):
            snapshot = [p.copy() for p in clf.params()]
            vel_snapshot = [v.copy() for v in velocity]
            order = generator(derive_seed(config.seed, "order", epoch, attempt)).permutation(n)
            for start in range(0, n, config.minibatch):
                idx = order[start : start + config.minibatch]
                grads = loss_gradients(clf, x[idx], y[idx])
                for p, v, g in zip(clf.params(), velocity, grads):
                    v *= config.momentum
                    v -= lr * g
                    p += v
            loss = cross_entropy(clf, x, y)
            if loss <= prev_loss + LOSS_MONOTONE_TOL:
                accepted = True
                break
            clf.w1, clf.b1, clf.w2, clf.b2 = snapshot
            velocity = vel_snapshot
            lr *= 0.5
        if not accepted:
            break
        prev_loss = loss
        losses.append(loss)

    clf.epoch_losses = losses
    return clf


# --- serialization -----------------------------------------------------------

def save_classifier(clf: Classifier, path) -> None:
    header = {
        "kind": "classifier",
        "arch": {
            "input_dim": clf.input_dim,
            "hidden_units": clf.hidden_units,
            "num_classes": clf.num_classes,
        },
        "version": clf.version,
        "seed": clf.seed,
    }
    write_blob_file(path, header, [("w1", clf.w1), ("b1", clf.b1), ("w2", clf.w2), ("b2", clf.b2)])


def load_classifier(path) -> Classifier:
    header, blobs = read_blob_file(path)
    if header.get("kind") != "classifier":
        raise ValueError(f"{path} does not hold a classifier")
    clf = Classifier(
        blobs["w1"], blobs["b1"], blobs["w2"], blobs["b2"],
        version=header["version"], seed=header.get("seed"),
    )
    return clf
