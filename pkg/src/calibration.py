"""
Classifier calibration: sensitivity (deceptive recall) from leave-one-hotel-out
cross-validation, specificity (truthful recall) from a development set that is
assumed truthful, and the Beta pseudo-count hyperparameters derived from both.

Index convention for the hyperparameters:
  beta  = <FN + 1, TP + 1>   index 0 <-> classifier output 0, index 1 <-> output 1
  gamma = <FP + 1, TN + 1>   index 0 <-> classifier output 1, index 1 <-> output 0
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from src.corpus import Corpus, group_by_hotel
from src.textmodel import LinearModel, cross_val_predict_by_group, predict_corpus, train

logger = logging.getLogger(__name__)

DEV_TRUTHFUL_ASSUMPTION = (
    "development reviews are unlabeled and assumed truthful; "
    "specificity may be underestimated if the development set contains deceptive reviews"
)
SENSITIVITY_ASSUMPTION = "sensitivity uses leave-one-hotel-out predictions on gold-deceptive training reviews only"


class SensitivityEstimate(NamedTuple):
    eta: float
    tp: int
    fn: int


class SpecificityEstimate(NamedTuple):
    theta: float
    tn_dev: int
    fp_dev: int


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    tn_dev: int = 0
    fp_dev: int = 0

    def __post_init__(self):
        for name in ('tp', 'fn', 'tn_dev', 'fp_dev'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CalibrationResult:
    eta: float
    theta: float
    counts: ConfusionCounts
    beta: tuple
    gamma: tuple
    assumptions: list = field(default_factory=list, compare=False)

    @classmethod
    def from_counts(cls, counts: ConfusionCounts, assumptions=None) -> 'CalibrationResult':
        if counts.tp + counts.fn == 0 or counts.tn_dev + counts.fp_dev == 0:
            raise ValueError("calibration needs at least one deceptive training review and one dev review")
        beta, gamma = hyperparams(counts)
        return cls(
            eta=counts.tp / (counts.tp + counts.fn),
            theta=counts.tn_dev / (counts.tn_dev + counts.fp_dev),
            counts=counts,
            beta=beta,
            gamma=gamma,
            assumptions=list(assumptions or []),
        )

    def to_dict(self) -> dict:
        return {
            'eta': self.eta,
            'theta': self.theta,
            'tp': self.counts.tp,
            'fn': self.counts.fn,
            'tn_dev': self.counts.tn_dev,
            'fp_dev': self.counts.fp_dev,
            'beta': list(self.beta),
            'gamma': list(self.gamma),
            'assumptions': list(self.assumptions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'CalibrationResult':
        counts = ConfusionCounts(int(data['tp']), int(data['fn']), int(data['tn_dev']), int(data['fp_dev']))
        result = cls.from_counts(counts, data.get('assumptions', []))
        if 'beta' in data and tuple(float(b) for b in data['beta']) != result.beta:
            raise ValueError("calibration file beta does not match its confusion counts")
        if 'gamma' in data and tuple(float(g) for g in data['gamma']) != result.gamma:
            raise ValueError("calibration file gamma does not match its confusion counts")
        return result


def hyperparams(counts: ConfusionCounts):
    """Beta pseudo-counts: beta = <FN+1, TP+1>, gamma = <FP+1, TN+1>."""
    beta = (float(counts.fn + 1), float(counts.tp + 1))
    gamma = (float(counts.fp_dev + 1), float(counts.tn_dev + 1))
    return beta, gamma


def sensitivity_from_predictions(labels: np.ndarray, predictions: np.ndarray) -> SensitivityEstimate:
    """Deceptive recall over gold-deceptive reviews; predictions on truthful ones are ignored."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    deceptive = labels == 1
    if not deceptive.any():
        raise ValueError("no gold-deceptive reviews to estimate sensitivity from")
    tp = int(np.sum(predictions[deceptive] == 1))
    fn = int(np.sum(predictions[deceptive] == 0))
    return SensitivityEstimate(tp / (tp + fn), tp, fn)


def specificity_from_predictions(predictions: np.ndarray) -> SpecificityEstimate:
    """Truthful recall when every review behind `predictions` is taken to be truthful."""
    predictions = np.asarray(predictions)
    if predictions.size == 0:
        raise ValueError("development set is empty")
    tn = int(np.sum(predictions == 0))
    fp = int(np.sum(predictions == 1))
    return SpecificityEstimate(tn / (tn + fp), tn, fp)


def estimate_sensitivity(train_corpus: Corpus, C: float, seed: int = 0,
                         on_fold: Optional[Callable] = None, n_jobs: int = 1) -> SensitivityEstimate:
    """Leave-one-hotel-out sensitivity of the classifier trained with cost C."""
    labels = train_corpus.labels()
    if not np.any(labels == 1):
        raise ValueError("no gold-deceptive reviews to estimate sensitivity from")
    groups = group_by_hotel(train_corpus)
    predicted = cross_val_predict_by_group(train_corpus, groups, C, seed=seed, on_fold=on_fold, n_jobs=n_jobs)
    predictions = np.array([predicted[rid] for rid in train_corpus.ids], dtype=np.int64)
    estimate = sensitivity_from_predictions(labels, predictions)
    logger.info(f"Sensitivity eta={estimate.eta:.4f} (TP={estimate.tp}, FN={estimate.fn}) over {len(groups)} hotels")
    return estimate


def estimate_specificity(model: LinearModel, dev: Corpus) -> SpecificityEstimate:
    """Specificity on a development corpus whose reviews are all treated as truthful."""
    if len(dev) == 0:
        raise ValueError("development set is empty")
    estimate = specificity_from_predictions(predict_corpus(model, dev))
    logger.info(f"Specificity theta={estimate.theta:.4f} (TN={estimate.tn_dev}, FP={estimate.fp_dev}) on {len(dev)} dev reviews")
    return estimate


def calibrate(train_corpus: Corpus, dev: Corpus, C: float, seed: int = 0,
              model: Optional[LinearModel] = None, n_jobs: int = 1) -> CalibrationResult:
    """
    Full calibration: grouped-CV sensitivity, then specificity from a model
    trained on the whole training set with the same C (or the supplied model).
    """
    sens = estimate_sensitivity(train_corpus, C, seed=seed, n_jobs=n_jobs)
    if model is None:
        model = train(train_corpus, C, seed=seed)
    specif = estimate_specificity(model, dev)
    counts = ConfusionCounts(sens.tp, sens.fn, specif.tn_dev, specif.fp_dev)
    return CalibrationResult.from_counts(counts, [DEV_TRUTHFUL_ASSUMPTION, SENSITIVITY_ASSUMPTION])


def save_calibration(result: CalibrationResult, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(result.to_dict(), handle, indent=2, sort_keys=True)
    logger.info(f"Calibration saved to {path}")


def load_calibration(path: str) -> CalibrationResult:
    if not os.path.exists(path):
        raise FileNotFoundError(f"calibration file not found: {path}")
    with open(path, 'r', encoding='utf-8') as handle:
        return CalibrationResult.from_dict(json.load(handle))
