"""Shared fixtures: small corpora and a short Gibbs schedule."""
from datetime import datetime, timedelta, timezone

import pytest

from src.corpus import Corpus, Review
from src.prevalence_bayes import GibbsConfig
from src.synthetic_oracle import generate_text_corpus

T0 = datetime(2012, 1, 1, tzinfo=timezone.utc)


def make_review(id, label=None, text='a perfectly pleasant stay', hotel='h1', reviewer=None,
                days=0, rating=5, community='TestSite') -> Review:
    return Review(
        id=id,
        community=community,
        hotel_id=hotel,
        reviewer_id=reviewer or f"u-{id}",
        timestamp=T0 + timedelta(days=days),
        rating=rating,
        text=text,
        label=label,
    )


def make_corpus(reviews) -> Corpus:
    return Corpus(tuple(reviews), provenance='test')


@pytest.fixture
def quick_gibbs():
    return GibbsConfig(iterations=3000, burn_in=500, lag=10, seed=0, chains=2)


@pytest.fixture(scope='session')
def separable_corpus():
    """Disjoint class vocabularies over 10 hotels."""
    return generate_text_corpus(60, 60, vocab_overlap=0.0, seed=11, n_hotels=10)


@pytest.fixture(scope='session')
def frozen_text_corpus():
    """The 400 + 400 synthetic benchmark corpus."""
    return generate_text_corpus(400, 400, vocab_overlap=0.7, seed=2013)
