"""Human-provided symbolic rule: categorize predictions, rank anomalies.

The rule targets overconfidence: a prediction whose confidence sits in the
[conf_lo, conf_hi) band while its agreement trust score is below trust_cut
is flagged as an overconfident anomaly and queued for human labeling.
Confidence at or above conf_hi is taken as trustworthy; everything else
(including all low-confidence predictions) is merely uncertain and never
sent for labeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class RuleThresholds:
    conf_lo: float = 0.65
    conf_hi: float = 0.95
    trust_cut: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.conf_lo < self.conf_hi <= 1.0:
            raise ValueError("need 0 <= conf_lo < conf_hi <= 1")
        if self.trust_cut <= 0.0:
            raise ValueError("trust_cut must be > 0")


class TrustCategory(str, Enum):
    TRUSTWORTHY = "trustworthy"
    OVERCONFIDENT_ANOMALY = "overconfident_anomaly"
    UNCERTAIN = "uncertain"


@dataclass
class PredictionRecord:
    """One inference event as seen by the Checker."""

    instance_id: int
    probabilities: np.ndarray
    confidence: float
    predicted: int
    trust: float
    category: TrustCategory


def categorize(confidence: float, trust: float, th: RuleThresholds = RuleThresholds()) -> TrustCategory:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must be in [0, 1], got {confidence}")
    if confidence >= th.conf_hi:
        return TrustCategory.TRUSTWORTHY
    if confidence >= th.conf_lo and trust < th.trust_cut:
        return TrustCategory.OVERCONFIDENT_ANOMALY
    return TrustCategory.UNCERTAIN


def select_anomalous(records: list[PredictionRecord], n_labels: int) -> list[PredictionRecord]:
    """Anomalies ranked most-suspicious-first (lowest trust, then lowest id),
    truncated to n_labels.  Fewer anomalies than n_labels returns them all."""
    if n_labels < 0:
        raise ValueError("n_labels must be >= 0")
    anomalies = [r for r in records if r.category is TrustCategory.OVERCONFIDENT_ANOMALY]
    anomalies.sort(key=lambda r: (r.trust, r.instance_id))
    return anomalies[:n_labels]
