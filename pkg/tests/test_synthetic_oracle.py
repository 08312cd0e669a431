from datetime import timedelta
from itertools import product

import numpy as np
import pytest
from scipy.special import betaln

from src.corpus import filter_by_reviewer_min_posts, group_by_hotel
from src.synthetic_oracle import (SYNTHETIC_START, GenerativeParams, ReviewTextGenerator, exact_posterior,
                                  expected_positive_rate, generate_labels_outputs, generate_review_population,
                                  generate_signal_cost_community, generate_text_corpus,
                                  spam_second_post_probability)


def _posterior_by_hand(outputs, alpha, beta, gamma):
    """Every label vector with its normalised posterior weight, straight from the Beta integrals."""
    n = len(outputs)
    labels = np.array(list(product([0, 1], repeat=n)))
    log_w = []
    for y in labels:
        n1 = y.sum()
        x1 = int(np.sum((y == 1) & (outputs == 1)))
        y0 = int(np.sum((y == 0) & (outputs == 0)))
        log_w.append(betaln(alpha[1] + n1, alpha[0] + n - n1) + betaln(beta[1] + x1, beta[0] + n1 - x1)
                     + betaln(gamma[1] + y0, gamma[0] + n - n1 - y0))
    weights = np.exp(np.array(log_w) - np.max(log_w))
    return labels, weights / weights.sum()


class TestGenerativeStory:

    def test_reproducible(self):
        p = GenerativeParams(0.3, 0.8, 0.7, 1000, seed=9)
        y1, f1 = generate_labels_outputs(p)
        y2, f2 = generate_labels_outputs(p)
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(f1, f2)

    def test_degenerate_rates(self):
        y, f = generate_labels_outputs(GenerativeParams(0.0, 0.9, 1.0, 500, seed=0))
        assert y.sum() == 0 and f.sum() == 0
        y, f = generate_labels_outputs(GenerativeParams(1.0, 1.0, 0.5, 500, seed=0))
        assert y.sum() == 500 and f.sum() == 500

    @pytest.mark.parametrize("seed", range(5))
    def test_empirical_rates_match_generating_values(self, seed):
        pi, eta, theta, n = 0.08, 0.9, 0.89, 20000
        y, f = generate_labels_outputs(GenerativeParams(pi, eta, theta, n, seed=seed))
        n1 = int(y.sum())
        assert abs(n1 - n * pi) <= 4 * np.sqrt(n * pi * (1 - pi))
        # recall on each gold class within four binomial standard errors
        assert abs(f[y == 1].mean() - eta) <= 4 * np.sqrt(eta * (1 - eta) / n1)
        assert abs(1 - f[y == 0].mean() - theta) <= 4 * np.sqrt(theta * (1 - theta) / (n - n1))

    @pytest.mark.parametrize("field,value", [('pi_star', 1.5), ('eta_star', -0.1), ('N', -1)])
    def test_invalid_params(self, field, value):
        kwargs = dict(pi_star=0.1, eta_star=0.9, theta_star=0.9, N=10)
        kwargs[field] = value
        with pytest.raises(ValueError):
            GenerativeParams(**kwargs)

    def test_expected_positive_rate(self):
        assert expected_positive_rate(0.08, 0.9, 0.89) == pytest.approx(0.08 * 0.9 + 0.92 * 0.11)


class TestExactPosterior:

    def test_single_review_uniform(self):
        # symmetric model: pi mean is 1/2 regardless of the output
        assert exact_posterior([1], (1, 1), (1, 1), (1, 1)).pi_mean == pytest.approx(0.5)

    def test_matches_direct_sum(self):
        outputs = np.array([1, 0, 1])
        alpha, beta, gamma = (1.0, 2.0), (1.0, 9.0), (5.0, 37.0)
        labels, weights = _posterior_by_hand(outputs, alpha, beta, gamma)
        pis = (alpha[1] + labels.sum(axis=1)) / (sum(alpha) + 3)
        exact = exact_posterior(outputs, alpha, beta, gamma)
        assert exact.pi_mean == pytest.approx(float(np.dot(weights, pis)))

    def test_per_review_marginals_sum_to_expected_count(self):
        outputs = np.array([1, 1, 0, 0, 0, 1, 0])
        alpha, beta, gamma = (2.0, 3.0), (2.0, 8.0), (5.0, 37.0)
        labels, weights = _posterior_by_hand(outputs, alpha, beta, gamma)
        exact = exact_posterior(outputs, alpha, beta, gamma)
        assert abs(exact.n1_mean - float(np.dot(weights, labels.sum(axis=1)))) <= 1e-12
        np.testing.assert_allclose(exact.per_review_p1, weights @ labels, rtol=0, atol=1e-12)
        assert exact.pi_mean == pytest.approx((3 + exact.n1_mean) / (5 + 7))
        assert np.all((exact.per_review_p1 >= 0) & (exact.per_review_p1 <= 1))

    def test_permuting_outputs_permutes_marginals(self):
        outputs = np.array([1, 0, 0, 1, 1, 0, 0, 0])
        order = np.random.default_rng(7).permutation(outputs.size)
        alpha, beta, gamma = (2.0, 3.0), (1.0, 9.0), (5.0, 37.0)
        exact = exact_posterior(outputs, alpha, beta, gamma)
        permuted = exact_posterior(outputs[order], alpha, beta, gamma)
        assert permuted.pi_mean == pytest.approx(exact.pi_mean, abs=1e-12)
        np.testing.assert_allclose(permuted.per_review_p1, exact.per_review_p1[order], rtol=0, atol=1e-12)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            exact_posterior(np.zeros(21, dtype=int), (1, 1), (1, 1), (1, 1))


class TestTextCorpora:

    def test_text_generator_pools_are_disjoint_at_zero_overlap(self):
        gen = ReviewTextGenerator(0.0, seed=1)
        truthful = set(gen.text(0).rstrip('.').lower().split())
        assert truthful <= set(gen.pools[0])

    def test_text_corpus_balance_and_hotels(self):
        corpus = generate_text_corpus(40, 30, vocab_overlap=0.5, seed=2, n_hotels=5)
        assert int(corpus.labels().sum()) == 30
        hotels = group_by_hotel(corpus)
        assert len(hotels) == 5
        assert all(set(g.labels().tolist()) == {0, 1} for g in hotels.values())

    def test_text_corpus_reproducible(self):
        a = generate_text_corpus(10, 10, 0.7, seed=4)
        b = generate_text_corpus(10, 10, 0.7, seed=4)
        assert a.reviews == b.reviews

    def test_population_prevalence(self):
        corpus = generate_review_population(5000, 0.08, 0.7, seed=1)
        assert abs(int(corpus.labels().sum()) - 400) <= 3 * np.sqrt(5000 * 0.08 * 0.92)
        assert generate_review_population(100, 0.0, 0.7, seed=1).labels().sum() == 0


class TestSignalCostCommunity:

    def test_second_post_probability_reaches_target(self):
        a2 = spam_second_post_probability(0.15, 0.02, 5)
        honest_repeats = 0.85 * 2.0
        assert a2 * 0.15 / (a2 * 0.15 + honest_repeats) == pytest.approx(0.02)

    def test_unreachable_repeat_rate(self):
        with pytest.raises(ValueError):
            spam_second_post_probability(0.01, 0.5, 5)

    def test_deception_drops_with_reviewer_threshold(self):
        community = generate_signal_cost_community('TwoTier', 4000, seed=0)
        rates = [filter_by_reviewer_min_posts(community, k).labels().mean() for k in (1, 2, 3)]
        assert rates[0] > rates[1] > rates[2]
        assert rates[0] == pytest.approx(0.0675, abs=0.015)
        assert rates[2] == 0.0

    @pytest.mark.parametrize("seed,span_days", [(5, 365.0), (1, 3.0)])
    def test_posts_stay_inside_the_generation_window(self, seed, span_days):
        community = generate_signal_cost_community('TwoTier', 6000, seed=seed, span_days=span_days)
        end = SYNTHETIC_START + timedelta(days=span_days)
        late = [r.id for r in community if r.timestamp >= end]
        assert late == []
        assert min(r.timestamp for r in community) >= SYNTHETIC_START
