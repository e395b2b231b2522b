"""Evaluation metrics over prediction sets.

Everything derives from the K x K confusion matrix (rows = ground truth,
columns = prediction): overall accuracy, ordinal binarizations with
sensitivity/specificity, and the quadratic weighted kappa that serves as
the screening benchmark metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    DegenerateMarginals,
    EmptyMatrix,
    LabelOutOfRange,
    MissingPatientId,
    UndefinedMetric,
)


@dataclass(frozen=True)
class PredictionRecord:
    """One scored sample: truth, argmax prediction, optional probabilities."""

    sample_path: str
    true_label: int
    predicted_label: int
    probabilities: tuple[float, ...] | None = None
    patient_id: str | None = None
    eye: str | None = None


PredictionSet = tuple[PredictionRecord, ...]


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # K x K int64, rows = truth, cols = prediction

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValueError("confusion matrix counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class BinarizationScheme:
    """Maps ordinal class indices onto a positive/negative screening call."""

    name: str
    positive_classes: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "positive_classes", frozenset(self.positive_classes))
        if not self.positive_classes:
            raise ValueError("positive_classes must be nonempty")
        if 0 in self.positive_classes:
            raise ValueError("class 0 cannot be positive")


def any_disease(num_classes: int) -> BinarizationScheme:
    """Class 0 vs. any nonzero grade."""
    return BinarizationScheme("any_disease", frozenset(range(1, num_classes)))


def referable(num_classes: int) -> BinarizationScheme:
    """Non-referable (grades 0-1) vs. referable (grade >= 2)."""
    return BinarizationScheme("referable", frozenset(range(2, num_classes)))


SCHEME_BUILDERS = {"any_disease": any_disease, "referable": referable}


@dataclass(frozen=True)
class KappaBreakdown:
    observed: np.ndarray  # counts normalized to sum 1
    expected: np.ndarray  # outer product of observed marginals
    weights: np.ndarray   # (i-j)^2 / (K-1)^2
    kappa: float


def confusion_matrix(predictions: Iterable[PredictionRecord], num_classes: int) -> ConfusionMatrix:
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for rec in predictions:
        if not 0 <= rec.true_label < num_classes:
            raise LabelOutOfRange(f"true label {rec.true_label} outside [0, {num_classes})")
        if not 0 <= rec.predicted_label < num_classes:
            raise LabelOutOfRange(f"prediction {rec.predicted_label} outside [0, {num_classes})")
        counts[rec.true_label, rec.predicted_label] += 1
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    return float(np.trace(cm.counts)) / cm.total


def binarize(cm: ConfusionMatrix, scheme: BinarizationScheme) -> BinaryConfusion:
    pos = np.array([i in scheme.positive_classes for i in range(cm.num_classes)])
    c = cm.counts
    tp = int(c[np.ix_(pos, pos)].sum())
    tn = int(c[np.ix_(~pos, ~pos)].sum())
    fn = int(c[np.ix_(pos, ~pos)].sum())
    fp = int(c[np.ix_(~pos, pos)].sum())
    return BinaryConfusion(tp=tp, tn=tn, fp=fp, fn=fn)


def sensitivity(bc: BinaryConfusion) -> float:
    if bc.tp + bc.fn == 0:
        raise UndefinedMetric("no actual positives")
    return bc.tp / (bc.tp + bc.fn)


def specificity(bc: BinaryConfusion) -> float:
    if bc.tn + bc.fp == 0:
        raise UndefinedMetric("no actual negatives")
    return bc.tn / (bc.tn + bc.fp)


def quadratic_weighted_kappa(cm: ConfusionMatrix) -> KappaBreakdown:
    """Chance-adjusted agreement with squared-distance disagreement weights.

    kappa = 1 - sum(W * O) / sum(W * E) with O the normalized counts, E the
    outer product of O's marginals, and W[i][j] = (i - j)^2 / (K - 1)^2.
    """
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    k = cm.num_classes
    if k < 2:
        raise ValueError("kappa needs at least 2 classes")
    observed = cm.counts.astype(np.float64) / cm.total
    truth_marginal = observed.sum(axis=1)
    pred_marginal = observed.sum(axis=0)
    expected = np.outer(truth_marginal, pred_marginal)
    idx = np.arange(k, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    denom = float((weights * expected).sum())
    if denom == 0.0:
        raise DegenerateMarginals("all mass in a single class for both raters")
    kappa = 1.0 - float((weights * observed).sum()) / denom
    return KappaBreakdown(observed=observed, expected=expected, weights=weights, kappa=kappa)


def kappa_category(kappa: float) -> str:
    """Agreement band for a kappa value.

    The conventional scale prints bands as <0.20, 0.21-0.40, 0.41-0.60,
    0.61-0.80, 0.81-1.00; boundary values sit in the closing band, so 0.20
    is Fair, 0.40 is Fair, 0.60 is Moderate, and so on.
    """
    if not -1.0 <= kappa <= 1.0:
        raise ValueError(f"kappa {kappa} outside [-1, 1]")
    if kappa < 0.20:
        return "Poor"
    if kappa <= 0.40:
        return "Fair"
    if kappa <= 0.60:
        return "Moderate"
    if kappa <= 0.80:
        return "Good"
    return "Very good"


def blend_to_patient(predictions: Iterable[PredictionRecord]) -> PredictionSet:
    """Collapse per-eye records to one record per patient.

    The patient-level label is the worse (maximum) severity over that
    patient's eyes, for prediction and truth alike.  Probabilities are
    dropped: the blend is defined on labels, not scores.
    """
    grouped: dict[str, list[PredictionRecord]] = {}
    for rec in predictions:
        if rec.patient_id is None:
            raise MissingPatientId(f"sample {rec.sample_path!r} has no patient_id")
        grouped.setdefault(rec.patient_id, []).append(rec)
    blended = []
    for patient_id in sorted(grouped):
        eyes = grouped[patient_id]
        blended.append(
            PredictionRecord(
                sample_path=patient_id,
                true_label=max(r.true_label for r in eyes),
                predicted_label=max(r.predicted_label for r in eyes),
                probabilities=None,
                patient_id=patient_id,
                eye=None,
            )
        )
    return tuple(blended)


def write_predictions(predictions: Iterable[PredictionRecord], path: str | Path) -> None:
    """Write records as sample_path/truth/pred/probabilities/patient/eye rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in predictions:
        probs = "" if rec.probabilities is None else ",".join(
            f"{p:.8g}" for p in rec.probabilities
        )
        lines.append("\t".join((
            rec.sample_path, str(rec.true_label), str(rec.predicted_label),
            probs, rec.patient_id or "", rec.eye or "",
        )))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_predictions(path: str | Path) -> PredictionSet:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        sample_path, truth, pred, probs, patient_id, eye = line.split("\t")
        records.append(
            PredictionRecord(
                sample_path=sample_path,
                true_label=int(truth),
                predicted_label=int(pred),
                probabilities=tuple(float(p) for p in probs.split(",")) if probs else None,
                patient_id=patient_id or None,
                eye=eye or None,
            )
        )
    return tuple(records)
