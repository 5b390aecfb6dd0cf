"""Latent-space reducers backing the trust-score geometry.

Two interchangeable kinds:
  * "pca" — exact linear projection onto the top covariance eigenvectors,
    computed by power iteration with deflation.  Deterministic and easy to
    check against a brute-force eigendecomposition, so tests lean on it.
  * "autoencoder" — the runtime default: 784 -> 128 -> latent -> 128 -> 784
    with ReLU on the 128-unit layers, trained on the mean-squared
    reconstruction error of mean-centered pixels with the same SGD+momentum
    optimizer the classifier uses.

A reducer is fit once on the initial training set and frozen for the whole
run so trust trends reflect the model, not a drifting latent space.
"""

from __future__ import annotations

import numpy as np

from .blobio import read_blob_file, write_blob_file
from .data import Dataset
from .errors import EmptyDataset, ShapeMismatch
from .seeds import derive_seed, generator

POWER_TOL = 1e-10
POWER_MAX_STEPS = 10_000
DEFAULT_LATENT_DIM = 32

AE_EPOCHS = 40
AE_LEARNING_RATE = 1e-3
AE_MOMENTUM = 0.9
AE_MINIBATCH = 64
AE_MONOTONE_TOL = 1e-6
# step-size schedule: gentle raise on every accepted epoch, halve and retry
# on a regressing one (the rollback guard doubles as the back-off)
AE_LR_RAISE = 1.2
AE_EXTRA_ATTEMPTS = 60


class PCAReducer:
    kind = "pca"

    def __init__(self, mean: np.ndarray, components: np.ndarray, eigenvalues: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.components = np.asarray(components, dtype=np.float64)  # (latent, d) orthonormal rows
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.components.shape[0]

    def encode_batch(self, images: np.ndarray) -> np.ndarray:
        return (np.asarray(images, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, latents: np.ndarray) -> np.ndarray:
        return np.asarray(latents, dtype=np.float64) @ self.components + self.mean


class AutoencoderReducer:
    kind = "autoencoder"

    def __init__(self, mean: np.ndarray, params: dict[str, np.ndarray]):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.epoch_losses: list[float] = []

    @property
    def input_dim(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.params["w2"].shape[1]

    def encode_batch(self, images: np.ndarray) -> np.ndarray:
        p = self.params
        centered = np.asarray(images, dtype=np.float64) - self.mean
        a1 = np.maximum(centered @ p["w1"] + p["b1"], 0.0)
        return a1 @ p["w2"] + p["b2"]

    def decode(self, latents: np.ndarray) -> np.ndarray:
        p = self.params
        a3 = np.maximum(np.asarray(latents, dtype=np.float64) @ p["w3"] + p["b3"], 0.0)
        return a3 @ p["w4"] + p["b4"] + self.mean

    def reconstruct(self, images: np.ndarray) -> np.ndarray:
        return self.decode(self.encode_batch(images))


Reducer = PCAReducer | AutoencoderReducer


def encode(reducer: Reducer, image: np.ndarray) -> np.ndarray:
    """Latent vector for a single flat image."""
    image = np.asarray(image, dtype=np.float64).ravel()
    if image.shape[0] != reducer.input_dim:
        raise ShapeMismatch(f"expected image of length {reducer.input_dim}, got {image.shape[0]}")
    return reducer.encode_batch(image[None, :])[0]


def encode_batch(reducer: Reducer, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[1] != reducer.input_dim:
        raise ShapeMismatch(f"expected (n, {reducer.input_dim}) images, got {images.shape}")
    return reducer.encode_batch(images)


def fit_reducer(
    train: Dataset,
    latent_dim: int = DEFAULT_LATENT_DIM,
    kind: str = "pca",
    seed: int = 0,
    epochs: int = AE_EPOCHS,
) -> Reducer:
    if len(train) == 0:
        raise EmptyDataset("fit_reducer needs a nonempty dataset")
    if latent_dim < 1 or latent_dim >= train.images.shape[1]:
        raise ValueError(f"latent_dim must be in [1, input_dim), got {latent_dim}")
    if kind == "pca":
        return _fit_pca(train.images, latent_dim, seed)
    if kind == "autoencoder":
        return _fit_autoencoder(train.images, latent_dim, seed, epochs)
    raise ValueError(f"unknown reducer kind {kind!r}")


# --- PCA ---------------------------------------------------------------------

def _fit_pca(x: np.ndarray, latent_dim: int, seed: int) -> PCAReducer:
    n, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)

    rng = generator(derive_seed(seed, "pca-start"))
    components: list[np.ndarray] = []
    eigenvalues: list[float] = []
    deflated = cov.copy()

    for _ in range(latent_dim):
        v = rng.standard_normal(d)
        v = _reorthogonalize(v, components)
        for _ in range(POWER_MAX_STEPS):
            w = deflated @ v
            w = _reorthogonalize(w, components, normalize=False)
            norm = np.linalg.norm(w)
            if norm < 1e-30:
                # remaining spectrum is (numerically) zero; keep current direction
                break
            w /= norm
            if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < POWER_TOL:
                v = w
                break
            v = w
        lam = float(v @ cov @ v)
        deflated -= lam * np.outer(v, v)
        # sign convention: largest-magnitude entry positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components.append(v)
        eigenvalues.append(lam)

    return PCAReducer(mean, np.vstack(components), np.array(eigenvalues))


def _reorthogonalize(v: np.ndarray, basis: list[np.ndarray], normalize: bool = True) -> np.ndarray:
    for u in basis:
        v = v - (u @ v) * u
    if normalize:
        norm = np.linalg.norm(v)
        if norm > 0:
            v = v / norm
    return v


# --- autoencoder -------------------------------------------------------------

def _ae_init(d: int, latent_dim: int, seed: int) -> dict[str, np.ndarray]:
    rng = generator(derive_seed(seed, "ae-init"))
    h = 128

    def layer(fan_in, fan_out):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))

    return {
        "w1": layer(d, h), "b1": np.zeros(h),
        "w2": layer(h, latent_dim), "b2": np.zeros(latent_dim),
        "w3": layer(latent_dim, h), "b3": np.zeros(h),
        "w4": layer(h, d), "b4": np.zeros(d),
    }


def _ae_forward(p: dict[str, np.ndarray], x: np.ndarray):
    z1 = x @ p["w1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p["w2"] + p["b2"]          # latent, linear
    z3 = z2 @ p["w3"] + p["b3"]
    a3 = np.maximum(z3, 0.0)
    xhat = a3 @ p["w4"] + p["b4"]        # output, linear
    return z1, a1, z2, z3, a3, xhat


def _ae_loss(p: dict[str, np.ndarray], x: np.ndarray) -> float:
    *_, xhat = _ae_forward(p, x)
    return float(((xhat - x) ** 2).mean())


def _ae_gradients(p: dict[str, np.ndarray], x: np.ndarray) -> dict[str, np.ndarray]:
    # optimizes per-sample sum of squared errors; reported loss is per-pixel
    n = x.shape[0]
    z1, a1, z2, z3, a3, xhat = _ae_forward(p, x)
    dxhat = 2.0 * (xhat - x) / n
    g = {}
    g["w4"] = a3.T @ dxhat
    g["b4"] = dxhat.sum(axis=0)
    da3 = dxhat @ p["w4"].T
    dz3 = da3 * (z3 > 0.0)
    g["w3"] = z2.T @ dz3
    g["b3"] = dz3.sum(axis=0)
    dz2 = dz3 @ p["w3"].T
    g["w2"] = a1.T @ dz2
    g["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["w2"].T
    dz1 = da1 * (z1 > 0.0)
    g["w1"] = x.T @ dz1
    g["b1"] = dz1.sum(axis=0)
    return g


def _fit_autoencoder(x: np.ndarray, latent_dim: int, seed: int, epochs: int) -> AutoencoderReducer:
    # trains on mean-centered residuals: keeps early steps small enough that
    # the ReLU layers stay alive, and the decoder need not relearn the mean
    mean = x.mean(axis=0)
    xc = x - mean
    n = xc.shape[0]
    params = _ae_init(xc.shape[1], latent_dim, seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    lr = AE_LEARNING_RATE
    prev_loss = _ae_loss(params, xc)
    losses: list[float] = []

    epoch = 0
    attempts = 0
    max_attempts = epochs + AE_EXTRA_ATTEMPTS
    while epoch < epochs and attempts < max_attempts:
        snapshot = {k: v.copy() for k, v in params.items()}
        vel_snapshot = {k: v.copy() for k, v in velocity.items()}
        order = generator(derive_seed(seed, "ae-order", epoch, attempts)).permutation(n)
        for start in range(0, n, AE_MINIBATCH):
            idx = order[start : start + AE_MINIBATCH]
            grads = _ae_gradients(params, xc[idx])
            for k in params:
                velocity[k] *= AE_MOMENTUM
                velocity[k] -= lr * grads[k]
                params[k] += velocity[k]
        loss = _ae_loss(params, xc)
        attempts += 1
        if np.isfinite(loss) and loss <= prev_loss + AE_MONOTONE_TOL:
            prev_loss = loss
            losses.append(loss)
            epoch += 1
            lr *= AE_LR_RAISE
        else:
            params = snapshot
            velocity = vel_snapshot
            lr *= 0.5

    reducer = AutoencoderReducer(mean, params)
    reducer.epoch_losses = losses
    return reducer


# --- serialization -----------------------------------------------------------

def save_reducer(reducer: Reducer, path) -> None:
    if reducer.kind == "pca":
        header = {"kind": "reducer-pca", "latent_dim": reducer.latent_dim}
        arrays = [
            ("mean", reducer.mean),
            ("components", reducer.components),
            ("eigenvalues", reducer.eigenvalues),
        ]
    else:
        header = {"kind": "reducer-autoencoder", "latent_dim": reducer.latent_dim}
        arrays = [("mean", reducer.mean)] + sorted(reducer.params.items())
    write_blob_file(path, header, arrays)


def load_reducer(path) -> Reducer:
    header, blobs = read_blob_file(path)
    kind = header.get("kind", "")
    if kind == "reducer-pca":
        return PCAReducer(blobs["mean"], blobs["components"], blobs["eigenvalues"])
    if kind == "reducer-autoencoder":
        mean = blobs.pop("mean")
        return AutoencoderReducer(mean, blobs)
    raise ValueError(f"{path} does not hold a reducer")
