"""Model evaluation shared by the Planner gate and the harness."""

from __future__ import annotations

from .data import Dataset
from .model import Classifier, predict_proba_batch
from .trust import TrustParams, net_trust_score, trust_spectrum


def prediction_records(clf: Classifier, dataset: Dataset) -> list[tuple[float, int, int]]:
    """(confidence, predicted, truth) for every example in the dataset."""
    probs = predict_proba_batch(clf, dataset.images)
    conf = probs.max(axis=1)
    pred = probs.argmax(axis=1)
    return list(zip(conf.tolist(), pred.tolist(), dataset.labels.tolist()))


def model_accuracy_and_nts(
    clf: Classifier, dataset: Dataset, params: TrustParams = TrustParams()
) -> tuple[float, float]:
    probs = predict_proba_batch(clf, dataset.images)
    pred = probs.argmax(axis=1)
    acc = float((pred == dataset.labels).mean())
    records = list(zip(probs.max(axis=1).tolist(), pred.tolist(), dataset.labels.tolist()))
    nts = net_trust_score(trust_spectrum(records, dataset.num_classes, params))
    return acc, nts


def model_net_trust_score(
    clf: Classifier, dataset: Dataset, params: TrustParams = TrustParams()
) -> float:
    return model_accuracy_and_nts(clf, dataset, params)[1]
