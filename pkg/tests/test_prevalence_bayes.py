import numpy as np
import pandas as pd
import pytest

from src.prevalence_bayes import (GibbsConfig, GibbsState, conditional_probability_y1, conditional_weight_y0,
                                  conditional_weight_y1, count_statistics, estimate_prevalence, init_state,
                                  reconstruct, run_chain, run_chains, summarize, write_posterior_csv)
from src.synthetic_oracle import GenerativeParams, exact_posterior, generate_labels_outputs

UNIFORM = ((1.0, 1.0), (1.0, 1.0))
SKEWED = ((1.0, 9.0), (5.0, 37.0))


class TestConditionals:

    def test_symmetric_single_review(self):
        loo = np.zeros(4, dtype=np.int64)
        assert conditional_weight_y1(1, loo, (1, 1), (1, 1)) == 0.5
        assert conditional_weight_y0(1, loo, (1, 1), (1, 1)) == 0.5

    def test_skewed_two_review_update(self):
        # review 2 is currently deceptive with output 1; review 1 (output 1) is being resampled
        state = GibbsState(np.array([1, 1]), np.array([1, 1]), count_statistics(np.array([1, 1]), np.array([1, 1])))
        loo = state.leave_one_out(0)
        np.testing.assert_array_equal(loo, [0, 1, 0, 0])
        w1 = conditional_weight_y1(1, loo, (1, 1), (1, 9))
        w0 = conditional_weight_y0(1, loo, (1, 1), (1, 9))
        assert w1 == pytest.approx(20 / 11)
        assert w0 == pytest.approx(0.1)
        p = conditional_probability_y1(state, 0, (1, 1), (1, 9), (1, 9))
        assert p == pytest.approx((20 / 11) / (20 / 11 + 0.1))

    def test_count_statistics(self):
        counts = count_statistics(np.array([1, 1, 0, 0, 0]), np.array([0, 1, 0, 1, 1]))
        np.testing.assert_array_equal(counts, [1, 1, 1, 2])


class TestConfig:

    @pytest.mark.parametrize("kwargs", [
        {'iterations': 100, 'burn_in': 100},
        {'iterations': 100, 'burn_in': 10, 'lag': 0},
        {'chains': 0},
        {'alpha': (0.0, 1.0)},
        {'iterations': 1000, 'burn_in': 900, 'lag': 50},
    ])
    def test_invalid_schedules(self, kwargs):
        with pytest.raises(ValueError):
            GibbsConfig(**kwargs)

    def test_retained_count(self):
        assert GibbsConfig().retained == 1000

    def test_invalid_outputs(self):
        with pytest.raises(ValueError):
            init_state([], seed=0)
        with pytest.raises(ValueError):
            init_state([0, 2], seed=0)


class TestChains:

    def test_counts_conserved_after_every_sweep(self, quick_gibbs):
        _, f = generate_labels_outputs(GenerativeParams(0.2, 0.8, 0.8, 300, seed=1))
        chain = run_chain(f, (1, 1), (5, 20), (5, 20), quick_gibbs, check_counts=True)
        np.testing.assert_array_equal(chain.stats[:, 1:].sum(axis=1), 300)
        np.testing.assert_array_equal(chain.stats[:, 0], chain.stats[:, 1] + chain.stats[:, 2])
        np.testing.assert_array_equal(chain.stats[:, 2] + chain.stats[:, 4], f.sum())

    def test_retained_sweep_schedule(self, quick_gibbs):
        chain = run_chain([1, 0, 1], (1, 1), (1, 1), (1, 1), quick_gibbs)
        assert chain.sweeps[0] == quick_gibbs.burn_in + quick_gibbs.lag
        assert chain.sweeps[-1] == quick_gibbs.iterations
        assert len(chain.sweeps) == quick_gibbs.retained

    def test_same_seed_same_samples(self, quick_gibbs):
        f = np.array([1, 0, 0, 1, 0, 0, 0, 1])
        a = run_chains(f, (1, 1), (2, 8), (2, 8), quick_gibbs)
        b = run_chains(f, (1, 1), (2, 8), (2, 8), quick_gibbs)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.stats, y.stats)
        assert not np.array_equal(a[0].stats, a[1].stats)

    def test_parallel_chains_match_serial(self, quick_gibbs):
        f = np.array([1, 0, 0, 1, 0, 0, 0, 1])
        parallel = GibbsConfig(quick_gibbs.iterations, quick_gibbs.burn_in, quick_gibbs.lag, chains=2, n_jobs=2)
        for x, y in zip(run_chains(f, (1, 1), (2, 8), (2, 8), quick_gibbs),
                        run_chains(f, (1, 1), (2, 8), (2, 8), parallel)):
            np.testing.assert_array_equal(x.stats, y.stats)


class TestSummaries:

    def test_posterior_mean_of_alternating_samples(self):
        low, high = [10, 0, 10, 88, 0], [20, 0, 20, 78, 0]
        stats = np.array([low, high] * 20)
        summary = summarize(stats, (1, 1), (1, 1), (1, 1), n_test=98)
        assert summary.pi_mean == pytest.approx(0.16)
        assert summary.n_samples == 40

    def test_reconstruction_formulas(self):
        pi, eta, theta = reconstruct(np.array([[4, 1, 3, 5, 2]]), (1, 1), (2, 3), (4, 6), n_test=11)
        assert pi[0] == pytest.approx((1 + 4) / (2 + 11))
        assert eta[0] == pytest.approx((3 + 3) / (5 + 4))
        assert theta[0] == pytest.approx((6 + 5) / (10 + 7))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            summarize(np.zeros((10, 5)), (1, 1), (1, 1), (1, 1), n_test=5)

    def test_interval_contains_mean_when_quantiles_collapse(self):
        # 99% of samples at N1=0, the rest at N1=10: both quantiles land on 1/22
        stats = np.array([[0, 0, 0, 20, 0]] * 990 + [[10, 10, 0, 10, 0]] * 10)
        summary = summarize(stats, (1, 1), (1, 50), (1, 50), n_test=20)
        assert summary.pi_mean == pytest.approx(0.05)
        assert summary.pi_ci95[0] == pytest.approx(1 / 22)
        assert summary.pi_ci95[1] == pytest.approx(summary.pi_mean)

    @pytest.mark.parametrize("prior", [(1, 50), (1, 100), (1, 200)])
    def test_all_zero_outputs_keep_mean_inside_interval(self, prior):
        cfg = GibbsConfig(iterations=20000, burn_in=2000, lag=10, seed=1, chains=3)
        summary, _ = estimate_prevalence(np.zeros(20, dtype=np.int64), prior, prior, cfg)
        for mean, (lo, hi) in [(summary.pi_mean, summary.pi_ci95), (summary.eta_mean, summary.eta_ci95),
                               (summary.theta_mean, summary.theta_ci95)]:
            assert 0.0 <= lo <= mean <= hi <= 1.0

    def test_no_deceptive_samples(self):
        stats = np.tile([0, 0, 0, 99, 0], (40, 1))
        summary = summarize(stats, (1, 1), (5, 37), (1, 1), n_test=99)
        assert summary.pi_mean == pytest.approx(1 / 101)
        assert summary.pi_ci95 == pytest.approx((1 / 101, 1 / 101))
        # prior mean of eta comes back when no review is labeled deceptive
        assert summary.eta_mean == pytest.approx(37 / 42)

    def test_estimates_stay_strictly_inside_unit_interval(self):
        n = 5
        rows = [(n1, n1 - x1, x1, y0, n - n1 - y0)
                for n1 in range(n + 1) for x1 in range(n1 + 1) for y0 in range(n - n1 + 1)]
        for prior in [(1, 1), (1, 9), (5, 37)]:
            for values in reconstruct(np.array(rows), (1, 1), prior, prior, n_test=n):
                assert np.all((values > 0) & (values < 1))

    def test_near_oracle_calibration(self, quick_gibbs):
        outputs = np.array([1] * 20 + [0] * 80)
        summary, _ = estimate_prevalence(outputs, (1, 1e6), (1, 1e6), quick_gibbs)
        assert summary.pi_mean == pytest.approx(0.2, abs=0.05)
        assert summary.pi_ci95[0] <= summary.pi_mean <= summary.pi_ci95[1]

    def test_near_oracle_matches_enumeration(self, quick_gibbs):
        outputs = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
        exact = exact_posterior(outputs, (1, 1), (1, 1e6), (1, 1e6))
        summary, _ = estimate_prevalence(outputs, (1, 1e6), (1, 1e6), quick_gibbs)
        assert summary.pi_mean == pytest.approx(exact.pi_mean, abs=0.01)

    def test_all_zero_outputs_with_near_perfect_classifier(self, quick_gibbs):
        summary, _ = estimate_prevalence(np.zeros(100, dtype=np.int64), (1, 1e6), (1, 1e6), quick_gibbs)
        assert summary.pi_mean < 0.05

    def test_two_chains_agree_on_near_oracle_case(self, quick_gibbs):
        outputs = np.array([1] * 20 + [0] * 80)
        summary, _ = estimate_prevalence(outputs, (1, 1e6), (1, 1e6), quick_gibbs)
        assert len(summary.diagnostics['chain_pi_means']) == 2
        assert summary.diagnostics['max_pairwise_spread'] <= 0.01
        assert summary.diagnostics['stable'] is True

    def test_only_output_counts_matter(self, quick_gibbs):
        ordered = np.array([1] * 30 + [0] * 70)
        shuffled = np.random.default_rng(4).permutation(ordered)
        means = {'ordered': [], 'shuffled': []}
        for seed in range(3):
            cfg = GibbsConfig(quick_gibbs.iterations, quick_gibbs.burn_in, quick_gibbs.lag, seed=seed, chains=2)
            for name, outputs in [('ordered', ordered), ('shuffled', shuffled)]:
                means[name].append(estimate_prevalence(outputs, (5, 37), (5, 37), cfg)[0].pi_mean)
        assert np.mean(means['ordered']) == pytest.approx(np.mean(means['shuffled']), abs=0.02)

    def test_chain_diagnostics(self, quick_gibbs):
        summary, chains = estimate_prevalence(np.array([1, 0, 0, 0, 1, 0]), (2, 8), (2, 8), quick_gibbs)
        diagnostics = summary.diagnostics
        assert len(diagnostics['chain_pi_means']) == quick_gibbs.chains
        assert diagnostics['stable'] == (diagnostics['max_pairwise_spread'] <= 0.01)
        assert summary.n_samples == quick_gibbs.chains * quick_gibbs.retained

    def test_posterior_csv(self, quick_gibbs, tmp_path):
        _, chains = estimate_prevalence(np.array([1, 0, 0, 1]), (1, 1), (1, 1), quick_gibbs)
        path = tmp_path / 'posterior.csv'
        write_posterior_csv(chains, (1, 1), str(path))
        frame = pd.read_csv(path)
        assert list(frame.columns) == ['chain', 'sweep', 'N1', 'X0', 'X1', 'Y0', 'Y1', 'pi_sample']
        assert len(frame) == quick_gibbs.chains * quick_gibbs.retained
        np.testing.assert_allclose(frame['pi_sample'], (1 + frame['N1']) / 6)


def _outputs(kind: str, n: int) -> np.ndarray:
    if kind == 'all0':
        return np.zeros(n, dtype=np.int64)
    if kind == 'all1':
        return np.ones(n, dtype=np.int64)
    return np.array([(i + 1) % 2 for i in range(n)], dtype=np.int64)


@pytest.mark.slow
@pytest.mark.parametrize("prior", [UNIFORM, SKEWED], ids=['uniform', 'skewed'])
@pytest.mark.parametrize("kind", ['all0', 'all1', 'mixed'])
@pytest.mark.parametrize("n", [1, 5, 10, 12])
def test_sampler_matches_exact_enumeration(n, kind, prior):
    beta, gamma = prior
    outputs = _outputs(kind, n)
    exact = exact_posterior(outputs, (1, 1), beta, gamma)
    summary, _ = estimate_prevalence(outputs, beta, gamma, GibbsConfig(seed=n))
    assert summary.pi_mean == pytest.approx(exact.pi_mean, abs=0.01)


@pytest.mark.slow
def test_recovers_generating_prevalence():
    beta, gamma = (41.0, 361.0), (45.0, 357.0)
    cfg_base = dict(iterations=6000, burn_in=1000, lag=10, chains=2)
    covered, close = 0, 0
    for seed in range(20):
        _, f = generate_labels_outputs(GenerativeParams(0.08, 0.90, 0.89, 5000, seed=seed))
        summary, _ = estimate_prevalence(f, beta, gamma, GibbsConfig(seed=seed, **cfg_base))
        covered += summary.pi_ci95[0] <= 0.08 <= summary.pi_ci95[1]
        close += abs(summary.pi_mean - 0.08) <= 0.02
    assert covered >= 17
    assert close >= 16
