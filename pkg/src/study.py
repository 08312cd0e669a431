"""
Prevalence-over-time study and the signal-cost hypotheses.

A PrevalenceSeries is one community under one reviewer-threshold policy k:
reviews are filtered by their author's posting count, bucketed by calendar
period (cumulative quarterly by default) and every bucket with enough reviews
gets a naive and a Bayesian prevalence estimate.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from src.corpus import filter_by_reviewer_min_posts
from src.prevalence_bayes import estimate_prevalence
from src.prevalence_naive import UninformativeClassifierError, naive_estimate, positive_rate
from src.textmodel import predict_corpus

logger = logging.getLogger(__name__)

GRANULARITY_FREQ = {'monthly': 'M', 'quarterly': 'Q', 'yearly': 'Y'}
DEFAULT_MIN_BUCKET = 30
SERIES_COLUMNS = ['community', 'policy_k', 'bucket_start', 'n_reviews', 'pi_f', 'pi_naive',
                  'naive_out_of_range', 'pi_bayes', 'ci_lo', 'ci_hi']
CUMULATIVE_ASSUMPTION = "buckets are cumulative: each holds every review up to the end of its period"
CALIBRATION_REUSE_ASSUMPTION = "calibration (eta, theta) is estimated once and reused for every reviewer threshold"


class PostingCost(str, Enum):
    HIGH = 'High'
    LOW = 'Low'


class ExposureBenefit(str, Enum):
    LOW = 'Low'
    MEDIUM = 'Medium'
    HIGH = 'High'


@dataclass(frozen=True)
class CommunityProfile:
    name: str
    posting_cost: PostingCost
    exposure_benefit: ExposureBenefit

    @classmethod
    def from_dict(cls, data):
        """Builds a profile from its JSON form; unknown cost or benefit levels raise ValueError."""
        return cls(data['name'], PostingCost(data['posting_cost']), ExposureBenefit(data['exposure_benefit']))

    def to_dict(self):
        return {'name': self.name, 'posting_cost': self.posting_cost.value,
                'exposure_benefit': self.exposure_benefit.value}


DEFAULT_PROFILES = (
    CommunityProfile('Orbitz', PostingCost.HIGH, ExposureBenefit.LOW),
    CommunityProfile('Priceline', PostingCost.HIGH, ExposureBenefit.MEDIUM),
    CommunityProfile('Expedia', PostingCost.HIGH, ExposureBenefit.MEDIUM),
    CommunityProfile('Hotels.com', PostingCost.HIGH, ExposureBenefit.MEDIUM),
    CommunityProfile('Yelp', PostingCost.LOW, ExposureBenefit.LOW),
    CommunityProfile('TripAdvisor', PostingCost.LOW, ExposureBenefit.HIGH),
)


def load_profiles(path=None):
    """Community profiles from a JSON list; the built-in table when no path is given."""
    if path is None:
        return list(DEFAULT_PROFILES)
    if not os.path.exists(path):
        raise FileNotFoundError(f"profile file not found: {path}")
    with open(path, 'r', encoding='utf-8') as handle:
        return [CommunityProfile.from_dict(item) for item in json.load(handle)]


def bucket_by_time(c, granularity='quarterly', cumulative=True):
    """
    Calendar-aligned buckets as (period start, Corpus) pairs in time order.
    Periods without reviews are omitted. Cumulative buckets hold every review
    up to the end of their period.
    """
    if granularity not in GRANULARITY_FREQ:
        raise ValueError(f"granularity must be one of {sorted(GRANULARITY_FREQ)}, got {granularity!r}")
    if len(c) == 0:
        return []
    frame = c.to_frame()
    periods = frame['timestamp'].dt.tz_localize(None).dt.to_period(GRANULARITY_FREQ[granularity])

    buckets = []
    for period in sorted(periods.unique()):
        mask = (periods <= period) if cumulative else (periods == period)
        start = period.start_time.tz_localize('UTC').to_pydatetime()
        members = [c[int(i)] for i in np.flatnonzero(mask.to_numpy())]
        buckets.append((start, c.derive(members)))
    return buckets


@dataclass(frozen=True)
class SeriesBucket:
    start: datetime
    n_reviews: int
    pi_f: float
    pi_naive: Optional[float]
    naive_out_of_range: bool
    pi_bayes: float
    ci_lo: float
    ci_hi: float
    naive_error: Optional[str] = None


@dataclass
class PrevalenceSeries:
    community: str
    policy_k: int
    granularity: str
    cumulative: bool
    buckets: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)
    review_ids: frozenset = field(default_factory=frozenset, repr=False)

    def to_frame(self):
        """One row per estimated bucket, in SERIES_COLUMNS order."""
        rows = [{
            'community': self.community,
            'policy_k': self.policy_k,
            'bucket_start': b.start.isoformat(),
            'n_reviews': b.n_reviews,
            'pi_f': b.pi_f,
            'pi_naive': b.pi_naive,
            'naive_out_of_range': b.naive_out_of_range,
            'pi_bayes': b.pi_bayes,
            'ci_lo': b.ci_lo,
            'ci_hi': b.ci_hi,
        } for b in self.buckets]
        return pd.DataFrame(rows, columns=SERIES_COLUMNS)


def run_series(c, model, cal, cfg, granularity='quarterly', cumulative=True, k=1,
               min_bucket_size=DEFAULT_MIN_BUCKET):
    """
    Naive and Bayesian prevalence per time bucket after the reviewer-threshold filter.
    `cal` is the one CalibrationResult shared by every threshold; `cfg` is the GibbsConfig.
    """
    community = c[0].community if len(c) else ''

    # 1. Keep reviews whose author has posted at least k times by then
    filtered = filter_by_reviewer_min_posts(c, k)
    series = PrevalenceSeries(community, k, granularity, cumulative,
                              assumptions=[CALIBRATION_REUSE_ASSUMPTION]
                              + ([CUMULATIVE_ASSUMPTION] if cumulative else []),
                              review_ids=frozenset(filtered.ids))
    if len(filtered) == 0:
        logger.warning(f"{community} k={k}: no reviews left after the reviewer filter")
        return series

    # 2. Classify once; buckets (cumulative ones overlap) look outputs up by id
    predicted = dict(zip(filtered.ids, predict_corpus(model, filtered).tolist()))

    # 3. Estimate every bucket that is big enough
    for start, bucket in bucket_by_time(filtered, granularity, cumulative):
        if len(bucket) < min_bucket_size:
            logger.warning(f"{community} k={k} bucket {start.date()}: {len(bucket)} reviews < {min_bucket_size}, skipped")
            series.skipped.append({'bucket_start': start.isoformat(), 'n_reviews': len(bucket),
                                   'reason': f"fewer than {min_bucket_size} reviews"})
            continue

        outputs = np.array([predicted[rid] for rid in bucket.ids], dtype=np.int64)
        pi_f = positive_rate(outputs)
        pi_naive, out_of_range, naive_error = None, False, None
        # Naive estimate is undefined for an uninformative classifier; the Bayesian one still runs
        try:
            naive = naive_estimate(pi_f, cal.eta, cal.theta)
            pi_naive, out_of_range = naive.pi_naive, naive.out_of_range
        except UninformativeClassifierError as exc:
            naive_error = str(exc)

        summary, _ = estimate_prevalence(outputs, cal.beta, cal.gamma, cfg)
        series.buckets.append(SeriesBucket(start, len(bucket), pi_f, pi_naive, out_of_range,
                                           summary.pi_mean, summary.pi_ci95[0], summary.pi_ci95[1], naive_error))
        logger.info(f"{community} k={k} bucket {start.date()}: n={len(bucket)} pi_f={pi_f:.4f} "
                    f"pi_bayes={summary.pi_mean:.4f}")
    return series


def write_series_csv(series, path):
    """Writes the series as CSV, creating the parent directory if needed."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    series.to_frame().to_csv(path, index=False, float_format='%.10g')
    logger.info(f"Series written to {path}")


def _trend_per_year(series):
    """Least-squares slope of pi_bayes per year; None with fewer than two buckets."""
    if len(series.buckets) < 2:
        return None
    t0 = series.buckets[0].start
    years = np.array([(b.start - t0).total_seconds() / (365.25 * 86400) for b in series.buckets])
    slope, _ = np.polyfit(years, np.array([b.pi_bayes for b in series.buckets]), 1)
    return float(slope)


def compare_hypotheses(series_set, profiles):
    """
    Descriptive check of the two signal-cost hypotheses (no significance testing).

    H1: low-posting-cost communities show more deception than high-cost ones,
        compared on the final-bucket estimate of each community's least
        restrictive policy.
    H2: within a community, final-bucket prevalence strictly decreases as the
        reviewer threshold k rises.
    """
    by_name = {p.name: p for p in profiles}
    rows, notes = [], []
    for s in series_set:
        if not s.buckets:
            notes.append(f"{s.community} k={s.policy_k}: no estimated buckets")
            continue
        profile = by_name.get(s.community)
        if profile is None:
            notes.append(f"{s.community}: no community profile; excluded from cost grouping")
        final = s.buckets[-1]
        rows.append({
            'community': s.community,
            'policy_k': s.policy_k,
            'posting_cost': profile.posting_cost.value if profile else None,
            'exposure_benefit': profile.exposure_benefit.value if profile else None,
            'final_pi_bayes': final.pi_bayes,
            'final_pi_naive': final.pi_naive,
            'trend_per_year': _trend_per_year(s),
        })
    table = pd.DataFrame(rows, columns=['community', 'policy_k', 'posting_cost', 'exposure_benefit',
                                        'final_pi_bayes', 'final_pi_naive', 'trend_per_year'])

    # 1. H1 on each community's least restrictive policy
    h1, cost_means, exposure_means = False, {}, {}
    if not table.empty:
        baseline = table.loc[table.groupby('community')['policy_k'].idxmin()]
        baseline = baseline.dropna(subset=['posting_cost'])
        cost_means = baseline.groupby('posting_cost')['final_pi_bayes'].mean().to_dict()
        exposure_means = baseline.groupby('exposure_benefit')['final_pi_bayes'].mean().to_dict()
        if baseline['community'].nunique() < 2:
            notes.append("H1 needs at least two communities")
        elif {PostingCost.LOW.value, PostingCost.HIGH.value} <= set(cost_means):
            h1 = bool(cost_means[PostingCost.LOW.value] > cost_means[PostingCost.HIGH.value])
        else:
            notes.append("H1 needs both a Low and a High posting-cost community")

    # 2. H2 per community across thresholds
    per_community = {}
    for name, group in table.groupby('community', sort=True):
        ordered = group.sort_values('policy_k')
        if len(ordered) < 2:
            continue
        values = ordered['final_pi_bayes'].to_numpy()
        per_community[name] = bool(np.all(np.diff(values) < 0))
    h2 = bool(per_community) and all(per_community.values())
    if not per_community:
        notes.append("H2 needs a community estimated under at least two thresholds")

    return {
        'communities': table.to_dict(orient='records'),
        'mean_final_prevalence_by_posting_cost': cost_means,
        'mean_final_prevalence_by_exposure_benefit': exposure_means,
        'H1_low_cost_exceeds_high_cost': h1,
        'H2_prevalence_decreases_with_k': h2,
        'H2_by_community': per_community,
        'notes': notes,
        'descriptive_only': True,
    }
