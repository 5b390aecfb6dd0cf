"""Trust machinery.

Two distinct instruments live here:

* The per-instance agreement trust score: the ratio between the distance
  from a query latent to the density set of the nearest class other than
  the predicted one, and its distance to the predicted class's density
  set.  A density set is a class's latent points with the fraction having
  the largest k-th-neighbor radius removed as outliers.  Needs no labels,
  so the Checker can apply it online.

* The model-level trust metrics: question-answer trust rewards confidence
  on correct answers (C^alpha) and penalizes it on wrong ones
  ((1-C)^beta); the trust spectrum averages it per ground-truth class; the
  net trust score averages the spectrum over classes.  These need labels
  and drive evaluation plus the promotion gate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ClassTooSmall, DomainError, NoClasses

EPSILON = 1e-12
DEFAULT_K = 10
DEFAULT_FILTER_FRACTION = 0.05
DEFAULT_BINS = 10


@dataclass(frozen=True)
class TrustParams:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be finite and >= 0")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError("beta must be finite and >= 0")


class DensityModel:
    """Per-class filtered latent point sets plus the filter settings."""

    def __init__(self, class_points: list[np.ndarray], k: int, filter_fraction: float):
        self.class_points = class_points
        self.k = k
        self.filter_fraction = filter_fraction
        self.epsilon = EPSILON

    @property
    def num_classes(self) -> int:
        return len(self.class_points)

    @property
    def latent_dim(self) -> int:
        return self.class_points[0].shape[1]


def _pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # |a-b|^2 = |a|^2 + |b|^2 - 2ab, clipped against negative round-off
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def fit_density_sets(
    latents: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    k: int = DEFAULT_K,
    filter_fraction: float = DEFAULT_FILTER_FRACTION,
) -> DensityModel:
    """Per class, drop the filter_fraction of points with the largest
    distance to their k-th nearest same-class neighbor; keep the rest."""
    if not 0.0 <= filter_fraction < 1.0:
        raise ValueError(f"filter_fraction must be in [0, 1), got {filter_fraction}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    class_points: list[np.ndarray] = []
    for c in range(num_classes):
        pts = latents[labels == c]
        n = len(pts)
        # ceil with a round-off guard so 0.09*11 drops exactly one point
        n_drop = int(np.ceil(filter_fraction * n - 1e-9))
        if n <= k or n - n_drop <= k:
            raise ClassTooSmall(
                f"class {c} has {n} points, {n - n_drop} after filtering; need > k={k}"
            )
        if n_drop == 0:
            class_points.append(pts.copy())
            continue
        sq = _pairwise_sqdist(pts, pts)
        np.fill_diagonal(sq, np.inf)
        radii = np.sqrt(np.partition(sq, k - 1, axis=1)[:, k - 1])
        # drop the n_drop largest radii; ties resolved toward lower index kept
        drop_order = np.lexsort((np.arange(n), -radii))
        keep = np.setdiff1d(np.arange(n), drop_order[:n_drop])
        class_points.append(pts[keep].copy())

    return DensityModel(class_points, k=k, filter_fraction=filter_fraction)


def class_distances(model: DensityModel, latents: np.ndarray) -> np.ndarray:
    """(n, L) Euclidean distance from each latent to each class's set."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim == 1:
        latents = latents[None, :]
    out = np.empty((len(latents), model.num_classes))
    for c, pts in enumerate(model.class_points):
        out[:, c] = np.sqrt(_pairwise_sqdist(latents, pts).min(axis=1))
    return out


def trust_scores(model: DensityModel, latents: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """Batch agreement trust: d(nearest foreign set) / (d(predicted set) + eps)."""
    predicted = np.asarray(predicted, dtype=np.int64)
    if predicted.min() < 0 or predicted.max() >= model.num_classes:
        raise ValueError("predicted class out of range")
    dists = class_distances(model, latents)
    rows = np.arange(len(dists))
    to_predicted = dists[rows, predicted].copy()
    dists[rows, predicted] = np.inf
    to_foreign = dists.min(axis=1)
    return to_foreign / (to_predicted + model.epsilon)


def trust_score(model: DensityModel, latent: np.ndarray, predicted: int) -> float:
    return float(trust_scores(model, np.asarray(latent)[None, :], np.array([predicted]))[0])


# --- model-level trust metrics ------------------------------------------------

def question_answer_trust(confidence: float, matched: bool, params: TrustParams = TrustParams()) -> float:
    """Reward C^alpha when the answer matched the oracle, (1-C)^beta when not."""
    if not 0.0 <= confidence <= 1.0:
        raise DomainError(f"confidence must be in [0, 1], got {confidence}")
    if matched:
        return float(confidence**params.alpha)
    return float((1.0 - confidence) ** params.beta)


def _qa_trust_vector(conf: np.ndarray, matched: np.ndarray, params: TrustParams) -> np.ndarray:
    return np.where(matched, conf**params.alpha, (1.0 - conf) ** params.beta)


def trust_density(q_values, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Histogram of question-answer trust values over B equal bins on [0, 1]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    q = np.asarray(list(q_values), dtype=np.float64)
    if len(q) and (q.min() < 0.0 or q.max() > 1.0):
        raise DomainError("q values must lie in [0, 1]")
    counts, _ = np.histogram(q, bins=bins, range=(0.0, 1.0))
    return counts


def trust_spectrum(records, num_classes: int, params: TrustParams = TrustParams()) -> np.ndarray:
    """Per ground-truth class, the mean question-answer trust.

    `records` is an iterable of (confidence, predicted, truth).  Classes
    with no records come back as NaN and are skipped downstream.
    """
    recs = list(records)
    spectrum = np.full(num_classes, np.nan)
    if not recs:
        return spectrum
    conf = np.array([r[0] for r in recs], dtype=np.float64)
    pred = np.array([r[1] for r in recs], dtype=np.int64)
    truth = np.array([r[2] for r in recs], dtype=np.int64)
    if conf.min() < 0.0 or conf.max() > 1.0:
        raise DomainError("confidence must lie in [0, 1]")
    if truth.min() < 0 or truth.max() >= num_classes:
        raise ValueError("truth class out of range")
    q = _qa_trust_vector(conf, pred == truth, params)
    for z in range(num_classes):
        mask = truth == z
        if mask.any():
            spectrum[z] = q[mask].mean()
    return spectrum


def net_trust_score(spectrum: np.ndarray) -> float:
    """Unweighted mean of the trust spectrum over present (non-NaN) classes."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    present = ~np.isnan(spectrum)
    if not present.any():
        raise NoClasses("trust spectrum has no present classes")
    return float(spectrum[present].mean())


# --- report ------------------------------------------------------------------

@dataclass
class TrustReport:
    spectrum: np.ndarray        # (L,) per-class mean question-answer trust, NaN if absent
    net_trust_score: float
    density: np.ndarray         # (L, B) histogram counts of q per class
    n_per_class: np.ndarray     # (L,)
    bins: int

    def to_json_dict(self) -> dict:
        return {
            "net_trust_score": self.net_trust_score,
            "spectrum": [None if np.isnan(v) else float(v) for v in self.spectrum],
            "density": self.density.astype(int).tolist(),
            "n_per_class": self.n_per_class.astype(int).tolist(),
            "bins": self.bins,
        }


def build_trust_report(
    records,
    num_classes: int,
    params: TrustParams = TrustParams(),
    bins: int = DEFAULT_BINS,
) -> TrustReport:
    recs = list(records)
    spectrum = trust_spectrum(recs, num_classes, params)
    nts = net_trust_score(spectrum)
    density = np.zeros((num_classes, bins), dtype=np.int64)
    n_per_class = np.zeros(num_classes, dtype=np.int64)
    if recs:
        conf = np.array([r[0] for r in recs], dtype=np.float64)
        pred = np.array([r[1] for r in recs], dtype=np.int64)
        truth = np.array([r[2] for r in recs], dtype=np.int64)
        q = _qa_trust_vector(conf, pred == truth, params)
        for z in range(num_classes):
            mask = truth == z
            n_per_class[z] = mask.sum()
            if mask.any():
                density[z] = trust_density(q[mask], bins)
    return TrustReport(spectrum, nts, density, n_per_class, bins)


def write_spectrum_csv(report: TrustReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "trust"])
        for z, v in enumerate(report.spectrum):
            w.writerow([z, "nan" if np.isnan(v) else repr(float(v))])


def write_density_csv(report: TrustReport, path) -> None:
    edges = np.linspace(0.0, 1.0, report.bins + 1)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "bin_lo", "bin_hi", "count"])
        for z in range(len(report.spectrum)):
            for b in range(report.bins):
                w.writerow([z, repr(float(edges[b])), repr(float(edges[b + 1])), int(report.density[z, b])])


def write_report_json(report: TrustReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report.to_json_dict(), f, indent=2)
        f.write("\n")
