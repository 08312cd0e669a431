"""
Bayesian prevalence model with collapsed Gibbs sampling.

The true prevalence, sensitivity and specificity are integrated out, so the
sampler only visits the per-review latent labels y_i. The chain state is the
label vector plus four counts:

    X_k = #{i : y_i = 1 and f(x_i) = k}      (stored at counts[k])
    Y_k = #{i : y_i = 0 and f(x_i) = k}      (stored at counts[2 + k])

One iteration is a full sweep that updates every y_i once, in index order.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numba import njit

logger = logging.getLogger(__name__)

MIN_RETAINED_SAMPLES = 30
CHAIN_AGREEMENT = 0.01
STAT_COLUMNS = ['N1', 'X0', 'X1', 'Y0', 'Y1']


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 70_000
    burn_in: int = 20_000
    lag: int = 50
    seed: int = 0
    chains: int = 3
    alpha: tuple = (1.0, 1.0)
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'alpha', tuple(float(a) for a in self.alpha))
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be in [0, iterations={self.iterations})")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if len(self.alpha) != 2 or min(self.alpha) <= 0:
            raise ValueError("alpha must be a pair of positive reals")
        if self.retained < MIN_RETAINED_SAMPLES:
            raise ValueError(f"config retains {self.retained} samples per chain; need >= {MIN_RETAINED_SAMPLES}")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.lag


def _pair(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (2,) or np.any(arr <= 0):
        raise ValueError(f"{name} must be a pair of positive reals, got {values!r}")
    return arr


@njit(cache=True)
def _weight_y1(f_i, counts, alpha, beta):
    n1 = counts[0] + counts[1]
    return (alpha[1] + n1) * (beta[f_i] + counts[f_i]) / (beta[0] + beta[1] + n1)


@njit(cache=True)
def _weight_y0(f_i, counts, alpha, gamma):
    n0 = counts[2] + counts[3]
    return (alpha[0] + n0) * (gamma[1 - f_i] + counts[2 + f_i]) / (gamma[0] + gamma[1] + n0)


@njit(cache=True)
def _sweep(y, outputs, counts, uniforms, alpha, beta, gamma):
    for i in range(y.shape[0]):
        f_i = outputs[i]
        if y[i] == 1:
            counts[f_i] -= 1
        else:
            counts[2 + f_i] -= 1
        w1 = _weight_y1(f_i, counts, alpha, beta)
        w0 = _weight_y0(f_i, counts, alpha, gamma)
        if uniforms[i] * (w1 + w0) < w1:
            y[i] = 1
            counts[f_i] += 1
        else:
            y[i] = 0
            counts[2 + f_i] += 1


def count_statistics(y: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """[X0, X1, Y0, Y1] recomputed from scratch."""
    y = np.asarray(y)
    outputs = np.asarray(outputs)
    return np.array([
        np.sum((y == 1) & (outputs == 0)),
        np.sum((y == 1) & (outputs == 1)),
        np.sum((y == 0) & (outputs == 0)),
        np.sum((y == 0) & (outputs == 1)),
    ], dtype=np.int64)


@dataclass
class GibbsState:
    """Latent labels plus their sufficient count statistics."""
    y: np.ndarray
    outputs: np.ndarray
    counts: np.ndarray

    @property
    def X(self) -> tuple:
        return int(self.counts[0]), int(self.counts[1])

    @property
    def Y(self) -> tuple:
        return int(self.counts[2]), int(self.counts[3])

    @property
    def N1(self) -> int:
        return int(self.counts[0] + self.counts[1])

    @property
    def N0(self) -> int:
        return int(self.counts[2] + self.counts[3])

    def leave_one_out(self, i: int) -> np.ndarray:
        """Counts with review i removed."""
        loo = self.counts.copy()
        f_i = int(self.outputs[i])
        loo[f_i if self.y[i] == 1 else 2 + f_i] -= 1
        return loo

    def check_counts(self) -> None:
        expected = count_statistics(self.y, self.outputs)
        if not np.array_equal(expected, self.counts):
            raise AssertionError(f"count statistics drifted: tracked {self.counts.tolist()}, actual {expected.tolist()}")
        if int(self.counts.sum()) != len(self.y):
            raise AssertionError("X0 + X1 + Y0 + Y1 != N_test")


def _check_outputs(outputs) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=np.int64)
    if outputs.ndim != 1 or outputs.size == 0:
        raise ValueError("classifier outputs must be a non-empty 1-d binary vector")
    if np.any((outputs != 0) & (outputs != 1)):
        raise ValueError("classifier outputs must be 0 or 1")
    return outputs


def init_state(outputs, seed) -> GibbsState:
    """Each y_i starts as an independent fair coin flip."""
    outputs = _check_outputs(outputs)
    rng = np.random.default_rng(seed)
    y = (rng.random(outputs.size) < 0.5).astype(np.int64)
    return GibbsState(y, outputs, count_statistics(y, outputs))


def conditional_weight_y1(f_i: int, loo_counts, alpha, beta) -> float:
    """
    Unnormalised Pr(y_i = 1 | rest):
    (alpha_1 + N1) * (beta_{f_i} + X_{f_i}) / (sum(beta) + N1), counts excluding review i.
    """
    return float(_weight_y1(int(f_i), np.asarray(loo_counts, dtype=np.int64),
                            _pair(alpha, 'alpha'), _pair(beta, 'beta')))


def conditional_weight_y0(f_i: int, loo_counts, alpha, gamma) -> float:
    """
    Unnormalised Pr(y_i = 0 | rest):
    (alpha_0 + N0) * (gamma_{1-f_i} + Y_{f_i}) / (sum(gamma) + N0), counts excluding review i.
    """
    return float(_weight_y0(int(f_i), np.asarray(loo_counts, dtype=np.int64),
                            _pair(alpha, 'alpha'), _pair(gamma, 'gamma')))


def conditional_probability_y1(state: GibbsState, i: int, alpha, beta, gamma) -> float:
    loo = state.leave_one_out(i)
    f_i = int(state.outputs[i])
    w1 = conditional_weight_y1(f_i, loo, alpha, beta)
    w0 = conditional_weight_y0(f_i, loo, alpha, gamma)
    return w1 / (w1 + w0)


@dataclass(frozen=True)
class ChainSamples:
    """Retained statistics of one chain; `stats` columns are N1, X0, X1, Y0, Y1."""
    chain: int
    sweeps: np.ndarray
    stats: np.ndarray
    n_test: int


def run_chain(outputs, alpha, beta, gamma, cfg: GibbsConfig, seed=None, chain: int = 0,
              check_counts: bool = False) -> ChainSamples:
    """
    Runs cfg.iterations sweeps and keeps (N1, X, Y) every cfg.lag sweeps after burn-in.
    `seed` overrides cfg.seed (an int, SeedSequence or Generator).
    With check_counts, the tracked counts are verified by a full recount after every sweep.
    """
    outputs = _check_outputs(outputs)
    alpha, beta, gamma = _pair(alpha, 'alpha'), _pair(beta, 'beta'), _pair(gamma, 'gamma')
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    state = init_state(outputs, rng)

    sweeps = np.empty(cfg.retained, dtype=np.int64)
    stats = np.empty((cfg.retained, 5), dtype=np.int64)
    kept = 0
    for sweep in range(1, cfg.iterations + 1):
        _sweep(state.y, state.outputs, state.counts, rng.random(outputs.size), alpha, beta, gamma)
        if check_counts:
            state.check_counts()
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.lag == 0 and kept < cfg.retained:
            sweeps[kept] = sweep
            stats[kept] = (state.N1, *state.counts)
            kept += 1

    logger.debug(f"Chain {chain}: {cfg.iterations} sweeps over {outputs.size} reviews, kept {kept} samples")
    return ChainSamples(chain, sweeps, stats, int(outputs.size))


def run_chains(outputs, alpha, beta, gamma, cfg: GibbsConfig, check_counts: bool = False) -> list:
    """Independent chains with spawned RNG streams; parallel when cfg.n_jobs != 1."""
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    return Parallel(n_jobs=cfg.n_jobs)(
        delayed(run_chain)(outputs, alpha, beta, gamma, cfg, seed=stream, chain=c, check_counts=check_counts)
        for c, stream in enumerate(streams)
    )


@dataclass(frozen=True)
class PosteriorSummary:
    pi_mean: float
    pi_ci95: tuple
    eta_mean: float
    eta_ci95: tuple
    theta_mean: float
    theta_ci95: tuple
    n_samples: int
    retained_samples: np.ndarray = field(repr=False, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            'pi_mean': self.pi_mean,
            'pi_ci95': list(self.pi_ci95),
            'eta_mean': self.eta_mean,
            'eta_ci95': list(self.eta_ci95),
            'theta_mean': self.theta_mean,
            'theta_ci95': list(self.theta_ci95),
            'n_samples': self.n_samples,
            'point_estimate': 'posterior mean',
            'diagnostics': self.diagnostics,
        }


def reconstruct(stats: np.ndarray, alpha, beta, gamma, n_test: int):
    """Per-sample pi, eta and theta from retained (N1, X0, X1, Y0, Y1) rows."""
    stats = np.asarray(stats, dtype=np.float64).reshape(-1, 5)
    alpha, beta, gamma = _pair(alpha, 'alpha'), _pair(beta, 'beta'), _pair(gamma, 'gamma')
    n1, x1, y0 = stats[:, 0], stats[:, 2], stats[:, 3]
    n0 = n_test - n1
    pi = (alpha[1] + n1) / (alpha.sum() + n_test)
    eta = (beta[1] + x1) / (beta.sum() + n1)
    theta = (gamma[1] + y0) / (gamma.sum() + n0)
    return pi, eta, theta


def _mean_ci(values: np.ndarray):
    """Mean and equal-tailed 95% interval, widened where needed so it contains the mean."""
    mean = float(np.mean(values))
    lo, hi = np.quantile(values, [0.025, 0.975])
    # a posterior piled on one count collapses the quantiles to a point the mean can miss
    return mean, (min(float(lo), mean), max(float(hi), mean))


def summarize(samples, alpha, beta, gamma, n_test: int) -> PosteriorSummary:
    """
    Posterior means and equal-tailed 95% intervals of pi, eta and theta.
    `samples` is either an (n, 5) array of retained statistics or a list of ChainSamples.
    """
    is_chains = isinstance(samples, (list, tuple)) and len(samples) > 0 and isinstance(samples[0], ChainSamples)
    chains = list(samples) if is_chains else None
    stats = (np.vstack([c.stats for c in chains]) if chains
             else np.asarray(samples, dtype=np.float64).reshape(-1, 5))
    if len(stats) < MIN_RETAINED_SAMPLES:
        raise ValueError(f"need at least {MIN_RETAINED_SAMPLES} retained samples, got {len(stats)}")

    pi, eta, theta = reconstruct(stats, alpha, beta, gamma, n_test)
    pi_mean, pi_ci = _mean_ci(pi)
    eta_mean, eta_ci = _mean_ci(eta)
    theta_mean, theta_ci = _mean_ci(theta)

    diagnostics = {}
    if chains:
        chain_means = [float(np.mean(reconstruct(c.stats, alpha, beta, gamma, n_test)[0])) for c in chains]
        spread = max((abs(a - b) for a, b in combinations(chain_means, 2)), default=0.0)
        diagnostics = {
            'chain_pi_means': chain_means,
            'max_pairwise_spread': spread,
            'stable': spread <= CHAIN_AGREEMENT,
        }
        if spread > CHAIN_AGREEMENT:
            logger.warning(f"Chains disagree on pi by {spread:.4f} (> {CHAIN_AGREEMENT}); consider more iterations")

    return PosteriorSummary(pi_mean, pi_ci, eta_mean, eta_ci, theta_mean, theta_ci,
                            len(stats), stats, diagnostics)


def estimate_prevalence(outputs, beta, gamma, cfg: GibbsConfig, check_counts: bool = False):
    """Runs all chains and summarises them. Returns (PosteriorSummary, chains)."""
    outputs = _check_outputs(outputs)
    chains = run_chains(outputs, cfg.alpha, beta, gamma, cfg, check_counts=check_counts)
    summary = summarize(chains, cfg.alpha, beta, gamma, outputs.size)
    logger.info(f"pi_bayes={summary.pi_mean:.4f} 95% CI [{summary.pi_ci95[0]:.4f}, {summary.pi_ci95[1]:.4f}] "
                f"from {summary.n_samples} samples over {cfg.chains} chains")
    return summary, chains


def posterior_frame(chains: Sequence[ChainSamples], alpha) -> pd.DataFrame:
    alpha = _pair(alpha, 'alpha')
    frames = []
    for c in chains:
        frame = pd.DataFrame(c.stats, columns=STAT_COLUMNS)
        frame.insert(0, 'sweep', c.sweeps)
        frame.insert(0, 'chain', c.chain)
        frame['pi_sample'] = (alpha[1] + frame['N1']) / (alpha.sum() + c.n_test)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_posterior_csv(chains: Sequence[ChainSamples], alpha, path: str) -> None:
    """Audit dump: chain, sweep, N1, X0, X1, Y0, Y1, pi_sample."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    posterior_frame(chains, alpha).to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Posterior samples written to {path}")
