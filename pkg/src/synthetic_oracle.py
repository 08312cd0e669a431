"""
Synthetic data and exact posteriors used to validate the prevalence models.

- generate_labels_outputs follows the generative story of the Bayesian model
  (labels from pi*, classifier outputs from eta* / theta*).
- exact_posterior enumerates all 2^N label vectors of the collapsed model;
  it is the ground truth the Gibbs sampler is tested against.
- The text generators produce review corpora whose separability is
  controlled by a single overlap knob.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from itertools import product

import numpy as np
from scipy.special import betaln, logsumexp

from src.corpus import Corpus, Review

logger = logging.getLogger(__name__)

MAX_EXACT_N = 20
SYNTHETIC_START = datetime(2011, 1, 1, tzinfo=timezone.utc)
SYLLABLES = ('ba', 'ko', 'li', 'mu', 'ne', 'ra', 'so', 'ti', 'vu', 'ze', 'pa', 'do', 'fi', 'ga', 'he')


@dataclass(frozen=True)
class GenerativeParams:
    pi_star: float
    eta_star: float
    theta_star: float
    N: int
    seed: int = 0

    def __post_init__(self):
        for name in ('pi_star', 'eta_star', 'theta_star'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.N < 0:
            raise ValueError(f"N must be non-negative, got {self.N}")


def expected_positive_rate(pi_star: float, eta_star: float, theta_star: float) -> float:
    """E[pi_f] = eta * pi + (1 - theta) * (1 - pi)."""
    return eta_star * pi_star + (1 - theta_star) * (1 - pi_star)


def generate_labels_outputs(p: GenerativeParams):
    """Draws gold labels y and classifier outputs f(x) per the generative story."""
    rng = np.random.default_rng(p.seed)
    y = (rng.random(p.N) < p.pi_star).astype(np.int64)
    u = rng.random(p.N)
    f = np.where(y == 1, u < p.eta_star, u < 1 - p.theta_star).astype(np.int64)
    return y, f


@dataclass(frozen=True)
class ExactPosterior:
    pi_mean: float
    per_review_p1: np.ndarray
    log_evidence: float

    @property
    def n1_mean(self) -> float:
        return float(np.sum(self.per_review_p1))


def _log_beta_ratio(a1, a0, prior) -> np.ndarray:
    return betaln(prior[1] + a1, prior[0] + a0) - betaln(prior[1], prior[0])


def exact_posterior(outputs, alpha, beta, gamma) -> ExactPosterior:
    """
    Exact posterior of the collapsed model by enumerating every label vector.

    Each assignment weighs
        B(a1+N1, a0+N0)/B(a) * B(b1+X1, b0+X0)/B(b) * B(g1+Y0, g0+Y1)/B(g)
    which is the joint of labels and outputs with pi*, eta*, theta* integrated out.
    """
    outputs = np.asarray(outputs, dtype=np.int64)
    n = outputs.size
    if n > MAX_EXACT_N:
        raise ValueError(f"exact enumeration supports N <= {MAX_EXACT_N}, got {n}")
    if n == 0:
        raise ValueError("outputs must be non-empty")
    alpha, beta, gamma = (np.asarray(v, dtype=np.float64) for v in (alpha, beta, gamma))

    # row j holds the bits of j: every label vector exactly once
    labels = ((np.arange(2 ** n, dtype=np.int64)[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    positive = outputs == 1
    n1 = labels.sum(axis=1, dtype=np.int64)
    x1 = labels[:, positive].sum(axis=1, dtype=np.int64)
    x0 = n1 - x1
    y1 = int(positive.sum()) - x1
    y0 = (n - n1) - y1

    log_w = (_log_beta_ratio(n1, n - n1, alpha)
             + _log_beta_ratio(x1, x0, beta)
             + _log_beta_ratio(y0, y1, gamma))
    log_evidence = float(logsumexp(log_w))
    probs = np.exp(log_w - log_evidence)

    pi_mean = float(np.dot(probs, (alpha[1] + n1) / (alpha.sum() + n)))
    per_review = np.array([probs[labels[:, j] == 1].sum() for j in range(n)])
    return ExactPosterior(pi_mean, per_review, log_evidence)


class ReviewTextGenerator:
    """
    Emits bag-of-pseudo-word review texts for the two classes.

    Each class owns a pool of words. A token comes from the review's own pool
    with probability 1 - overlap/2 and from the other pool otherwise, so
    overlap=0 gives disjoint vocabularies and overlap=1 identical distributions.
    """

    def __init__(self, vocab_overlap: float, seed: int = 0, pool_size: int = 150, tokens_per_review: int = 15):
        if not 0.0 <= vocab_overlap <= 1.0:
            raise ValueError(f"vocab_overlap must lie in [0, 1], got {vocab_overlap}")
        self.vocab_overlap = vocab_overlap
        self.pool_size = pool_size
        self.tokens_per_review = tokens_per_review
        self.rng = np.random.default_rng(seed)

        words = [''.join(parts) for parts in product(SYLLABLES, repeat=3)]
        if 2 * pool_size > len(words):
            raise ValueError(f"pool_size too large; at most {len(words) // 2} words per class")
        self.pools = {0: words[:pool_size], 1: words[pool_size:2 * pool_size]}

    def text(self, label: int) -> str:
        own = self.rng.random(self.tokens_per_review) >= self.vocab_overlap / 2
        picks = self.rng.integers(0, self.pool_size, size=self.tokens_per_review)
        tokens = [self.pools[label if keep else 1 - label][int(j)] for keep, j in zip(own, picks)]
        return ' '.join(tokens).capitalize() + '.'

    def describe(self) -> dict:
        return {
            'vocab_overlap': self.vocab_overlap,
            'pool_size': self.pool_size,
            'tokens_per_review': self.tokens_per_review,
            'own_pool_probability': 1 - self.vocab_overlap / 2,
        }


def generate_text_corpus(n_truthful: int, n_deceptive: int, vocab_overlap: float, seed: int = 0,
                         n_hotels: int = 20, community: str = 'synthetic', id_prefix: str = 'syn') -> Corpus:
    """Balanced-by-hotel labeled corpus; every hotel receives reviews of both classes."""
    if n_truthful < 1 or n_deceptive < 1:
        raise ValueError("n_truthful and n_deceptive must be >= 1")
    rng = np.random.default_rng(seed)
    generator = ReviewTextGenerator(vocab_overlap, seed=int(rng.integers(2 ** 32)))

    # 1. Labels and hotels (round-robin per class)
    entries = [(0, i % n_hotels) for i in range(n_truthful)] + [(1, i % n_hotels) for i in range(n_deceptive)]
    order = rng.permutation(len(entries))

    # 2. Reviews in shuffled order
    reviews = []
    for pos, idx in enumerate(order):
        label, hotel = entries[int(idx)]
        reviews.append(Review(
            id=f"{id_prefix}-{pos:06d}",
            community=community,
            hotel_id=f"hotel-{hotel:02d}",
            reviewer_id=f"{id_prefix}-user-{pos:06d}",
            timestamp=SYNTHETIC_START + timedelta(hours=pos),
            rating=5,
            text=generator.text(label),
            label=label,
        ))

    metadata = {'generator': 'text_corpus', 'n_truthful': n_truthful, 'n_deceptive': n_deceptive,
                'n_hotels': n_hotels, 'seed': seed, **generator.describe()}
    logger.info(f"Generated synthetic text corpus: {n_truthful} truthful + {n_deceptive} deceptive")
    return Corpus(tuple(reviews), provenance='synthetic', metadata=metadata)


def _random_instants(rng, n: int, start: datetime, span_days: float) -> list:
    offsets = np.sort(rng.uniform(0, span_days * 86400.0, size=n))
    return [start + timedelta(seconds=float(s)) for s in offsets]


def generate_review_population(n: int, pi_star: float, vocab_overlap: float, seed: int = 0,
                               community: str = 'synthetic', n_hotels: int = 20,
                               start: datetime = SYNTHETIC_START, span_days: float = 365.0,
                               id_prefix: str = 'pop') -> Corpus:
    """Unfiltered-community stand-in: n reviews whose gold labels are Bernoulli(pi_star)."""
    if not 0.0 <= pi_star <= 1.0:
        raise ValueError(f"pi_star must lie in [0, 1], got {pi_star}")
    rng = np.random.default_rng(seed)
    generator = ReviewTextGenerator(vocab_overlap, seed=int(rng.integers(2 ** 32)))
    labels = (rng.random(n) < pi_star).astype(int)
    hotels = rng.integers(0, n_hotels, size=n)
    times = _random_instants(rng, n, start, span_days)

    reviews = [Review(
        id=f"{id_prefix}-{i:06d}",
        community=community,
        hotel_id=f"hotel-{int(hotels[i]):02d}",
        reviewer_id=f"{id_prefix}-user-{i:06d}",
        timestamp=times[i],
        rating=5,
        text=generator.text(int(labels[i])),
        label=int(labels[i]),
    ) for i in range(n)]

    metadata = {'generator': 'review_population', 'n': n, 'pi_star': pi_star, 'seed': seed,
                'n_deceptive': int(labels.sum()), **generator.describe()}
    return Corpus(tuple(reviews), provenance='synthetic', metadata=metadata)


def spam_second_post_probability(first_time_pi: float, repeat_pi: float, max_honest_posts: int) -> float:
    """
    Probability that a deceptive account posts a second review, chosen so that
    repeat reviews (an author's 2nd and later) are deceptive at rate repeat_pi.
    """
    if not 0.0 < first_time_pi < 1.0 or not 0.0 <= repeat_pi < 1.0:
        raise ValueError("first_time_pi must lie in (0, 1) and repeat_pi in [0, 1)")
    honest_repeats = (1 - first_time_pi) * ((1 + max_honest_posts) / 2 - 1)
    a2 = repeat_pi * honest_repeats / (first_time_pi * (1 - repeat_pi))
    if a2 > 1:
        raise ValueError(f"repeat_pi={repeat_pi} is unreachable with max_honest_posts={max_honest_posts}")
    return a2


def generate_signal_cost_community(name: str, n_accounts: int, first_time_pi: float = 0.15,
                                   repeat_pi: float = 0.02, vocab_overlap: float = 0.2, seed: int = 0,
                                   max_honest_posts: int = 5, n_hotels: int = 20,
                                   start: datetime = SYNTHETIC_START, span_days: float = 365.0,
                                   burst_days: float = 7.0) -> Corpus:
    """
    Community where deception comes from short-lived accounts.

    A first_time_pi share of accounts is deceptive: they post one review, or a
    second one within `burst_days`, and every post is deceptive. Honest accounts
    post 1..max_honest_posts truthful reviews spread over the period. First
    reviews are then deceptive at rate first_time_pi, repeat reviews at
    repeat_pi, and third-or-later reviews never are.
    """
    a2 = spam_second_post_probability(first_time_pi, repeat_pi, max_honest_posts)
    rng = np.random.default_rng(seed)
    generator = ReviewTextGenerator(vocab_overlap, seed=int(rng.integers(2 ** 32)))
    end = start + timedelta(days=span_days)

    posts = []  # (timestamp, account, label)
    for account in range(n_accounts):
        if rng.random() < first_time_pi:
            first = start + timedelta(seconds=float(rng.uniform(0, span_days * 86400.0)))
            posts.append((first, account, 1))
            if rng.random() < a2:
                # second post stays strictly before the end of the window
                room = (end - first).total_seconds() - 1.0
                offset = float(rng.random()) * min(burst_days * 86400.0, room)
                posts.append((first + timedelta(seconds=max(offset, 0.0)), account, 1))
        else:
            n_posts = int(rng.integers(1, max_honest_posts + 1))
            for ts in _random_instants(rng, n_posts, start, span_days):
                posts.append((ts, account, 0))

    posts.sort(key=lambda p: (p[0], p[1]))
    reviews = [Review(
        id=f"{name}-{i:06d}",
        community=name,
        hotel_id=f"hotel-{int(rng.integers(n_hotels)):02d}",
        reviewer_id=f"{name}-acct-{account:05d}",
        timestamp=ts,
        rating=5,
        text=generator.text(label),
        label=label,
    ) for i, (ts, account, label) in enumerate(posts)]

    metadata = {'generator': 'signal_cost_community', 'n_accounts': n_accounts, 'first_time_pi': first_time_pi,
                'repeat_pi': repeat_pi, 'spam_second_post_probability': a2, 'seed': seed,
                'n_deceptive': sum(p[2] for p in posts), **generator.describe()}
    logger.info(f"Generated community {name}: {len(reviews)} reviews from {n_accounts} accounts")
    return Corpus(tuple(reviews), provenance='synthetic', metadata=metadata)
