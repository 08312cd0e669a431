"""
Review ingestion, validation, filtering and grouping.

A Corpus is an immutable, ordered collection of Review records. Everything
downstream (classifier training, calibration, prevalence estimation, the
time-series study) consumes corpora produced here.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ('id', 'community', 'hotel_id', 'reviewer_id', 'timestamp', 'rating', 'text')
TRUTHFUL, DECEPTIVE = 0, 1


class CorpusFormatError(ValueError):
    """Raised for malformed review files; names the line or review id."""


def parse_timestamp(value: str) -> datetime:
    """Parses an ISO-8601 instant. Naive timestamps are rejected."""
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith('Z'):
        text = text[:-1] + '+00:00'
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None or ts.utcoffset() is None:
        raise ValueError(f"timestamp without timezone offset: {value}")
    return ts


def format_timestamp(ts: datetime) -> str:
    return ts.isoformat()


@dataclass(frozen=True)
class Review:
    """One review record. `label` is None for unlabeled reviews."""
    id: str
    community: str
    hotel_id: str
    reviewer_id: str
    timestamp: datetime
    rating: int
    text: str
    label: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.rating, bool) or not isinstance(self.rating, int) or not 1 <= self.rating <= 5:
            raise ValueError(f"rating must be an integer 1-5, got {self.rating!r}")
        if self.label is not None and (isinstance(self.label, bool) or self.label not in (TRUTHFUL, DECEPTIVE)):
            raise ValueError(f"label must be 0, 1 or absent, got {self.label!r}")
        if self.timestamp.tzinfo is None:
            raise ValueError(f"timestamp without timezone offset for review {self.id}")

    @property
    def n_chars(self) -> int:
        # Python str length counts unicode scalar values, not bytes
        return len(self.text)

    @classmethod
    def from_dict(cls, record: dict) -> 'Review':
        missing = [name for name in REQUIRED_FIELDS if name not in record]
        if missing:
            raise ValueError(f"missing field {missing[0]}")
        for name in ('id', 'community', 'hotel_id', 'reviewer_id', 'text'):
            if not isinstance(record[name], str):
                raise ValueError(f"field {name} must be a string")
        return cls(
            id=record['id'],
            community=record['community'],
            hotel_id=record['hotel_id'],
            reviewer_id=record['reviewer_id'],
            timestamp=parse_timestamp(record['timestamp']),
            rating=record['rating'],
            text=record['text'],
            label=record.get('label'),
        )

    def to_dict(self) -> dict:
        record = {
            'id': self.id,
            'community': self.community,
            'hotel_id': self.hotel_id,
            'reviewer_id': self.reviewer_id,
            'timestamp': format_timestamp(self.timestamp),
            'rating': self.rating,
            'text': self.text,
        }
        if self.label is not None:
            record['label'] = self.label
        return record


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of reviews plus a provenance note."""
    reviews: tuple = ()
    provenance: str = ''
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'reviews', tuple(self.reviews))
        seen = set()
        for review in self.reviews:
            if review.id in seen:
                raise CorpusFormatError(f"duplicate review id: {review.id}")
            seen.add(review.id)

    def __len__(self) -> int:
        return len(self.reviews)

    def __iter__(self) -> Iterator[Review]:
        return iter(self.reviews)

    def __getitem__(self, idx):
        return self.reviews[idx]

    @property
    def ids(self) -> list:
        return [r.id for r in self.reviews]

    @property
    def texts(self) -> list:
        return [r.text for r in self.reviews]

    def labels(self) -> np.ndarray:
        """Gold labels as an int array; fails if any review is unlabeled."""
        if any(r.label is None for r in self.reviews):
            raise ValueError("corpus contains unlabeled reviews")
        return np.array([r.label for r in self.reviews], dtype=np.int64)

    def derive(self, reviews: Iterable[Review], note: Optional[str] = None) -> 'Corpus':
        """New corpus with the same provenance (plus an optional step note)."""
        provenance = self.provenance if note is None else f"{self.provenance} | {note}".strip(' |')
        return replace(self, reviews=tuple(reviews), provenance=provenance)

    def labeled_only(self) -> 'Corpus':
        return self.derive((r for r in self.reviews if r.label is not None), note='labeled only')

    def to_frame(self) -> pd.DataFrame:
        """Flat DataFrame view, timestamps normalised to UTC."""
        frame = pd.DataFrame(
            [r.to_dict() for r in self.reviews],
            columns=list(REQUIRED_FIELDS) + ['label'],
        )
        frame['timestamp'] = pd.to_datetime([r.timestamp for r in self.reviews], utc=True)
        return frame


def load_jsonl(path: str, provenance: Optional[str] = None) -> Corpus:
    """
    Reads a JSONL review file into a Corpus, preserving file order.
    Unknown fields are ignored; blank lines are skipped.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"review file not found: {path}")

    reviews = []
    seen = set()
    with open(path, 'r', encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("expected a JSON object")
                review = Review.from_dict(record)
            except (ValueError, TypeError) as exc:
                raise CorpusFormatError(f"line {line_no}: {exc}") from exc
            if review.id in seen:
                raise CorpusFormatError(f"line {line_no}: duplicate review id: {review.id}")
            seen.add(review.id)
            reviews.append(review)

    logger.info(f"Loaded {len(reviews)} reviews from {path}")
    return Corpus(tuple(reviews), provenance=provenance or path)


def write_jsonl(corpus: Corpus, path: str) -> None:
    """Writes a corpus back out in the ingestion schema."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for review in corpus:
            handle.write(json.dumps(review.to_dict(), ensure_ascii=False, sort_keys=True) + '\n')
    logger.info(f"Wrote {len(corpus)} reviews to {path}")


def filter_reviews(c: Corpus, min_chars: int, rating: Optional[int] = None) -> Corpus:
    """Keeps reviews with at least `min_chars` characters and, optionally, one exact star rating."""
    if min_chars < 0:
        raise ValueError(f"min_chars must be >= 0, got {min_chars}")
    if min_chars == 0 and rating is None:
        return c
    kept = [r for r in c if r.n_chars >= min_chars and (rating is None or r.rating == rating)]
    logger.info(f"filter_reviews kept {len(kept)}/{len(c)} (min_chars={min_chars}, rating={rating})")
    return c.derive(kept, note=f"min_chars={min_chars} rating={rating}")


def sample_uniform(c: Corpus, n: int, seed: int) -> Corpus:
    """Uniform draw of n reviews without replacement; reproducible for a given seed."""
    if n < 0 or n > len(c):
        raise ValueError(f"cannot sample {n} reviews from a corpus of {len(c)}")
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(c))[:n]
    return c.derive((c[int(i)] for i in picks), note=f"uniform sample n={n} seed={seed}")


def _group_by(c: Corpus, key) -> dict:
    groups = {}
    for review in c:
        groups.setdefault(key(review), []).append(review)
    return {name: c.derive(members) for name, members in groups.items()}


def group_by_hotel(c: Corpus) -> dict:
    """Partitions a corpus by hotel_id (first-seen order)."""
    return _group_by(c, lambda r: r.hotel_id)


def group_by_community(c: Corpus) -> dict:
    return _group_by(c, lambda r: r.community)


class ReviewerHistory:
    """Posting history of one reviewer inside one community."""

    def __init__(self, reviewer_id: str, timestamps: Iterable[datetime]):
        self.reviewer_id = reviewer_id
        self._times = np.sort(np.array([ts.timestamp() for ts in timestamps], dtype=float))

    def review_count_at(self, t: datetime) -> int:
        """Number of this reviewer's reviews with timestamp <= t."""
        return int(np.searchsorted(self._times, t.timestamp(), side='right'))


def reviewer_histories(c: Corpus) -> dict:
    """Maps (community, reviewer_id) to a ReviewerHistory."""
    stamps = {}
    for review in c:
        stamps.setdefault((review.community, review.reviewer_id), []).append(review.timestamp)
    return {key: ReviewerHistory(key[1], times) for key, times in stamps.items()}


def filter_by_reviewer_min_posts(c: Corpus, k: int) -> Corpus:
    """
    Keeps a review only if, at the moment it was posted, its author had
    posted at least k reviews in that community (the review itself included).
    """
    if k < 1:
        raise ValueError(f"reviewer threshold k must be >= 1, got {k}")
    if k == 1:
        return c
    histories = reviewer_histories(c)
    kept = [r for r in c
            if histories[(r.community, r.reviewer_id)].review_count_at(r.timestamp) >= k]
    logger.info(f"Reviewer threshold k={k} kept {len(kept)}/{len(c)} reviews")
    return c.derive(kept, note=f"reviewer_min_posts={k}")
