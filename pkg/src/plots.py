"""Static SVG charts of prevalence series (byte-stable for a fixed input)."""
import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from src.study import PrevalenceSeries  # noqa: E402

logger = logging.getLogger(__name__)

# fixed salt + no date metadata keep SVG output identical across runs
matplotlib.rcParams['svg.hashsalt'] = 'prevalence-series'
matplotlib.rcParams['svg.fonttype'] = 'none'


def plot_series(series: PrevalenceSeries, path: str) -> None:
    """pi_bayes over time with its 95% credible band; the naive estimate dashed."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    if series.buckets:
        x = [b.start for b in series.buckets]
        ax.fill_between(x, [b.ci_lo for b in series.buckets], [b.ci_hi for b in series.buckets],
                        color='tab:blue', alpha=0.25, linewidth=0, label='95% credible interval')
        ax.plot(x, [b.pi_bayes for b in series.buckets], color='tab:blue', marker='o', label='Bayesian')
        naive = [(b.start, b.pi_naive) for b in series.buckets if b.pi_naive is not None]
        if naive:
            ax.plot([t for t, _ in naive], [v for _, v in naive], color='tab:gray', linestyle='--', label='Naive')
        ax.legend(loc='upper right', fontsize='small')
    else:
        ax.text(0.5, 0.5, 'no estimated buckets', ha='center', va='center', transform=ax.transAxes)

    mode = 'cumulative ' if series.cumulative else ''
    ax.set_title(f"{series.community} (k={series.policy_k}, {mode}{series.granularity})")
    ax.set_xlabel('time')
    ax.set_ylabel('prevalence of deception')
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info(f"Plot written to {path}")
