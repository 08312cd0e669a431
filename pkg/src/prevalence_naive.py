"""
Closed-form corrected prevalence (adjusted classify-and-count).

    pi_naive = (pi_f - (1 - theta)) / (eta - (1 - theta))

The estimate is deliberately not clipped to [0, 1]; out-of-range values are
flagged because they are diagnostic of miscalibration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

NEAR_DEGENERATE = 1e-6


class UninformativeClassifierError(ValueError):
    """eta + theta == 1: the classifier output carries no information about the label."""


@dataclass(frozen=True)
class NaiveEstimate:
    pi_naive: float
    pi_f: float
    eta: float
    theta: float

    @property
    def below_zero(self) -> bool:
        return self.pi_naive < 0

    @property
    def above_one(self) -> bool:
        return self.pi_naive > 1

    @property
    def out_of_range(self) -> bool:
        return self.below_zero or self.above_one

    @property
    def near_degenerate(self) -> bool:
        return abs(self.eta - (1 - self.theta)) < NEAR_DEGENERATE

    def to_dict(self) -> dict:
        return {
            'pi_f': self.pi_f,
            'eta': self.eta,
            'theta': self.theta,
            'pi_naive': self.pi_naive,
            'out_of_range': self.out_of_range,
            'below_zero': self.below_zero,
            'above_one': self.above_one,
            'near_degenerate': self.near_degenerate,
        }


def positive_rate(predictions: Sequence[int]) -> float:
    """Fraction of reviews the classifier labels deceptive."""
    predictions = np.asarray(predictions)
    if predictions.size == 0:
        raise ValueError("cannot compute a positive rate of an empty prediction list")
    return float(np.mean(predictions == 1))


def naive_estimate(pi_f: float, eta: float, theta: float) -> NaiveEstimate:
    denominator = eta - (1 - theta)
    if denominator == 0:
        raise UninformativeClassifierError(
            f"uninformative classifier: eta + theta = 1 (eta={eta}, theta={theta})")
    estimate = NaiveEstimate((pi_f - (1 - theta)) / denominator, pi_f, eta, theta)
    if estimate.near_degenerate:
        logger.warning(f"Naive estimator denominator {denominator:.2e} is close to zero; estimate is unstable")
    if estimate.out_of_range:
        logger.info(f"Naive estimate {estimate.pi_naive:.4f} lies outside [0, 1]")
    return estimate
