import json
from datetime import timedelta

import pytest

from src.corpus import (Corpus, CorpusFormatError, ReviewerHistory, filter_by_reviewer_min_posts, filter_reviews,
                        group_by_community, group_by_hotel, load_jsonl, parse_timestamp, sample_uniform, write_jsonl)
from tests.conftest import T0, make_corpus, make_review


def _record(i, **overrides):
    record = {
        'id': f"r{i}",
        'community': 'TestSite',
        'hotel_id': 'h1',
        'reviewer_id': f"u{i}",
        'timestamp': '2012-03-04T10:00:00Z',
        'rating': 5,
        'text': 'x' * 200,
    }
    record.update(overrides)
    return record


def _write(path, records):
    path.write_text('\n'.join(json.dumps(r) for r in records) + '\n', encoding='utf-8')
    return str(path)


class TestLoadJsonl:

    def test_loads_in_file_order(self, tmp_path):
        path = _write(tmp_path / 'reviews.jsonl', [_record(2), _record(1, label=1), _record(3, label=0)])
        corpus = load_jsonl(path)
        assert corpus.ids == ['r2', 'r1', 'r3']
        assert corpus[0].label is None
        assert corpus[1].label == 1
        assert corpus[0].timestamp.utcoffset() == timedelta(0)

    def test_missing_field_names_line_and_field(self, tmp_path):
        bad = _record(2)
        del bad['text']
        path = _write(tmp_path / 'reviews.jsonl', [_record(1), bad])
        with pytest.raises(CorpusFormatError, match="line 2: missing field text"):
            load_jsonl(path)

    def test_naive_timestamp_rejected(self, tmp_path):
        path = _write(tmp_path / 'reviews.jsonl', [_record(1, timestamp='2012-03-04T10:00:00')])
        with pytest.raises(CorpusFormatError, match="line 1"):
            load_jsonl(path)

    @pytest.mark.parametrize("overrides", [{'rating': 6}, {'rating': 0}, {'label': 2}, {'rating': '5'}])
    def test_invalid_values_rejected(self, tmp_path, overrides):
        path = _write(tmp_path / 'reviews.jsonl', [_record(1, **overrides)])
        with pytest.raises(CorpusFormatError):
            load_jsonl(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = _write(tmp_path / 'reviews.jsonl', [_record(1), _record(1)])
        with pytest.raises(CorpusFormatError, match="duplicate review id: r1"):
            load_jsonl(path)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.jsonl"):
            load_jsonl(str(tmp_path / 'nope.jsonl'))

    def test_write_then_load_preserves_reviews(self, tmp_path):
        corpus = make_corpus([make_review('a', label=1), make_review('b', days=3)])
        write_jsonl(corpus, str(tmp_path / 'out.jsonl'))
        assert load_jsonl(str(tmp_path / 'out.jsonl')).reviews == corpus.reviews


def test_parse_timestamp_keeps_offset():
    ts = parse_timestamp('2012-03-04T10:00:00+02:00')
    assert ts.utcoffset() == timedelta(hours=2)


class TestFilterReviews:

    def test_min_chars_and_rating(self):
        corpus = make_corpus([
            make_review('long5', text='x' * 150),
            make_review('short5', text='x' * 149),
            make_review('long4', text='x' * 300, rating=4),
        ])
        assert filter_reviews(corpus, 150, rating=5).ids == ['long5']
        assert filter_reviews(corpus, 150).ids == ['long5', 'long4']

    def test_zero_threshold_is_identity(self):
        corpus = make_corpus([make_review('a', text=''), make_review('b')])
        assert filter_reviews(corpus, 0) == corpus

    def test_counts_characters_not_bytes(self):
        corpus = make_corpus([make_review('u', text='é' * 150)])
        assert len(filter_reviews(corpus, 150)) == 1

    def test_empty_corpus(self):
        assert len(filter_reviews(Corpus(), 150)) == 0

    def test_filtering_twice_changes_nothing(self):
        corpus = make_corpus([make_review(f"r{i}", text='x' * (140 + 5 * i), rating=4 + i % 2) for i in range(6)])
        once = filter_reviews(corpus, 150, rating=5)
        assert filter_reviews(once, 150, rating=5).reviews == once.reviews


class TestSampleUniform:

    def test_reproducible(self):
        corpus = make_corpus([make_review(f"r{i}") for i in range(50)])
        first = sample_uniform(corpus, 10, seed=3)
        assert first.ids == sample_uniform(corpus, 10, seed=3).ids
        assert len(set(first.ids)) == 10

    def test_full_sample_is_a_permutation(self):
        corpus = make_corpus([make_review(f"r{i}") for i in range(20)])
        assert sorted(sample_uniform(corpus, 20, seed=0).ids) == sorted(corpus.ids)

    def test_oversampling_rejected(self):
        with pytest.raises(ValueError):
            sample_uniform(make_corpus([make_review('a')]), 2, seed=0)


def test_groupings_partition_the_corpus():
    corpus = make_corpus([
        make_review('a', hotel='h1'), make_review('b', hotel='h2'), make_review('c', hotel='h1', community='Other'),
    ])
    by_hotel = group_by_hotel(corpus)
    assert {k: v.ids for k, v in by_hotel.items()} == {'h1': ['a', 'c'], 'h2': ['b']}
    by_community = group_by_community(corpus)
    assert sorted(sum((g.ids for g in by_community.values()), [])) == ['a', 'b', 'c']


def test_grouping_an_empty_corpus():
    assert group_by_hotel(Corpus()) == {}
    assert group_by_community(Corpus()) == {}


class TestReviewerThreshold:

    def _history_corpus(self):
        # u1 posts on days 0, 10, 20; u2 once; u3 twice
        return make_corpus([
            make_review('u1-a', reviewer='u1', days=0),
            make_review('u1-b', reviewer='u1', days=10),
            make_review('u1-c', reviewer='u1', days=20),
            make_review('u2-a', reviewer='u2', days=5),
            make_review('u3-a', reviewer='u3', days=1),
            make_review('u3-b', reviewer='u3', days=2),
        ])

    def test_review_count_includes_current_post(self):
        history = ReviewerHistory('u1', [T0, T0 + timedelta(days=10)])
        assert history.review_count_at(T0) == 1
        assert history.review_count_at(T0 + timedelta(days=9)) == 1
        assert history.review_count_at(T0 + timedelta(days=10)) == 2

    def test_k1_is_identity(self):
        corpus = self._history_corpus()
        assert filter_by_reviewer_min_posts(corpus, 1) == corpus

    def test_k2_keeps_repeat_posts_only(self):
        kept = filter_by_reviewer_min_posts(self._history_corpus(), 2)
        assert kept.ids == ['u1-b', 'u1-c', 'u3-b']

    def test_thresholds_are_nested(self):
        corpus = self._history_corpus()
        previous = set(corpus.ids)
        for k in range(1, 5):
            current = set(filter_by_reviewer_min_posts(corpus, k).ids)
            assert current <= previous
            previous = current
        assert previous == set()

    def test_counts_are_per_community(self):
        corpus = make_corpus([
            make_review('a', reviewer='u1', days=0, community='SiteA'),
            make_review('b', reviewer='u1', days=1, community='SiteB'),
        ])
        assert len(filter_by_reviewer_min_posts(corpus, 2)) == 0

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            filter_by_reviewer_min_posts(self._history_corpus(), 0)
