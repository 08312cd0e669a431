import numpy as np
import pytest

from src.prevalence_naive import UninformativeClassifierError, naive_estimate, positive_rate
from src.synthetic_oracle import GenerativeParams, expected_positive_rate, generate_labels_outputs


def test_positive_rate():
    assert positive_rate([1, 0, 0, 1, 1]) == 0.6
    with pytest.raises(ValueError):
        positive_rate([])


@pytest.mark.parametrize("pi_f", np.linspace(0.0, 1.0, 101))
def test_perfect_classifier_is_identity(pi_f):
    assert naive_estimate(pi_f, 1.0, 1.0).pi_naive == pi_f


def test_known_value():
    est = naive_estimate(0.2, 0.9, 0.89)
    assert est.pi_naive == pytest.approx((0.2 - 0.11) / 0.79)
    assert not est.out_of_range


@pytest.mark.parametrize("pi_f", [0.0, 0.05, 0.1, 0.11, 0.12, 0.5, 0.99, 1.0])
def test_negative_estimate_flag(pi_f):
    theta = 0.89
    est = naive_estimate(pi_f, 0.9, theta)
    assert est.below_zero == (pi_f < 1 - theta)
    assert est.out_of_range == (est.below_zero or est.above_one)


def test_above_one_flag():
    est = naive_estimate(0.95, 0.9, 0.89)
    assert est.above_one and est.out_of_range and not est.below_zero


def test_uninformative_classifier():
    with pytest.raises(UninformativeClassifierError, match="uninformative"):
        naive_estimate(0.5, 0.5, 0.5)


def test_near_degenerate_is_flagged(caplog):
    est = naive_estimate(0.5, 0.6, 0.4 + 5e-7)
    assert est.near_degenerate
    assert "close to zero" in caplog.text


def test_forward_consistency_over_synthetic_draws():
    """Mean positive rate over many draws matches eta*pi + (1-theta)(1-pi)."""
    pi_star, eta_star, theta_star, n = 0.08, 0.9, 0.89, 500
    rates = np.array([
        generate_labels_outputs(GenerativeParams(pi_star, eta_star, theta_star, n, seed=s))[1].mean()
        for s in range(1000)
    ])
    expected = expected_positive_rate(pi_star, eta_star, theta_star)
    standard_error = rates.std(ddof=1) / np.sqrt(len(rates))
    assert abs(rates.mean() - expected) <= 3 * standard_error


def test_naive_recovers_generating_rate_on_average():
    pi_star, eta_star, theta_star = 0.3, 0.85, 0.8
    estimates = [
        naive_estimate(generate_labels_outputs(GenerativeParams(pi_star, eta_star, theta_star, 2000, seed=s))[1].mean(),
                       eta_star, theta_star).pi_naive
        for s in range(200)
    ]
    assert np.mean(estimates) == pytest.approx(pi_star, abs=0.01)
