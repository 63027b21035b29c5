from __future__ import annotations

import datetime as dt

import pytest
from hypothesis import given, settings, strategies as st

from builders import corpus_from_synthetic, corpus_of, day, review
from reviewquarantine import rsd, synthgen
from reviewquarantine.ingest import DEFAULT_WINDOW


def _series(pos, neg=None, bid="B"):
    start = dt.date(2014, 1, 1)
    return rsd.DailyCountSeries(
        bid, DEFAULT_WINDOW,
        {start + dt.timedelta(days=i): c for i, c in enumerate(pos)},
        {start + dt.timedelta(days=i): c for i, c in enumerate(neg or [])},
    )


def test_same_day_positives():
    c = corpus_of([review(f"r{i}", f"u{i}", "b", 5, "2015-06-01") for i in range(3)])
    assert rsd.build_series("b", c).positive_counts == {dt.date(2015, 6, 1): 3}


def test_neutral_only():
    s = rsd.build_series("b", corpus_of([review("r", "u", "b", 3, "2015-06-01")]))
    assert s.positive_counts == {} and s.negative_counts == {} and s.neutral_count == 1


def test_window_limits_series():
    c = corpus_of([review("a", "u", "b", 5, "2015-06-01"), review("c", "v", "b", 1, "2016-06-01")])
    s = rsd.build_series("b", c, (dt.date(2015, 1, 1), dt.date(2015, 12, 31)))
    assert list(s.positive_counts) == [dt.date(2015, 6, 1)] and s.negative_counts == {}


def test_hinges_hand_values():
    assert rsd.quartiles([1, 2, 3, 4, 5, 6, 7, 8]) == (2.5, 4.5, 6.5)
    assert rsd.quartiles([5]) == (5, 5, 5)
    assert rsd.quartiles([3, 1, 2, 5, 4]) == (2, 3, 4)  # odd length: halves share the median


@given(st.integers(0, 50), st.integers(1, 30))
def test_constant_list(c, n):
    fp = rsd.fence_pair([c] * n)
    assert (fp.q1, fp.q2, fp.q3, fp.iqr, fp.uof) == (c, c, c, 0, c)


def test_fence_arithmetic():
    fp = rsd.fence_pair([2, 2, 2, 10, 10, 10])
    assert (fp.q1, fp.q3, fp.iqr, fp.uof, fp.lof) == (2, 10, 8, 22, -10)


def test_uof_boundary_is_strict():
    fp = rsd.FencePair(2, 3, 4, 2, 10, -1)
    assert [s.count for s in rsd.detect_spikes(_series([11, 10, 3]), fp, None)] == [11]


def test_constant_series_flags_anything_above():
    s = _series([2, 2, 2, 2, 2, 3])
    fp = rsd.fences(s, rsd.POSITIVE)
    assert fp.iqr == 0 and fp.uof == 2
    assert [x.count for x in rsd.detect_spikes(s, fp, None)] == [3]


def test_no_spikes_below_fence():
    s = _series([1, 2, 1, 3, 2, 1, 2])
    assert rsd.detect_spikes(s, rsd.fences(s, rsd.POSITIVE), None) == []


def test_not_enough_active_days():
    with pytest.raises(rsd.NotEnoughData):
        rsd.fences(_series([1, 1, 1, 1]), rsd.POSITIVE)
    assert rsd.fences(_series([1, 1, 1, 1]), rsd.POSITIVE, min_active_days=4).q2 == 1


def test_negative_spikes_reported_with_polarity():
    s = _series([1, 1, 1, 1, 1], [1, 1, 2, 1, 12])
    found = rsd.detect_spikes(s, rsd.fences(s, rsd.POSITIVE), rsd.fences(s, rsd.NEGATIVE))
    assert [(x.polarity, x.count) for x in found] == [("negative", 12)]


def test_spikes_in_burst_years():
    # steady positives 2010-2016 with heavy days concentrated in 2013-2015
    revs, n = [], 0
    for i in range(0, 7 * 365, 9):
        d = dt.date(2010, 1, 1) + dt.timedelta(days=i)
        k = 9 if 2013 <= d.year <= 2015 and i % 90 == 0 else 1
        for _ in range(k):
            revs.append(review(f"r{n}", f"u{n}", "b", 5, d))
            n += 1
    an = rsd.spiky_businesses(["b"], corpus_of(revs))
    assert an.spikes and all(2013 <= s.date.year <= 2015 for s in an.spikes)


def test_no_spiky_businesses():
    c = corpus_of([review(f"r{i}", f"u{i}", "b", 4, day(3 * i)) for i in range(10)])
    an = rsd.spiky_businesses(["b"], c)
    assert an.spiky == [] and an.spiky_fraction == 0.0
    assert rsd.spiky_businesses([], c).spiky_fraction == 0.0


def test_planted_campaign_day_is_the_only_spike():
    spec = synthgen.ScenarioSpec(seed=3, n_ordinary_users=150, n_popular_users=2, n_spammer_popular_users=1,
                                 n_businesses=4, n_attacked_businesses=2, organic_reviews_min=30,
                                 organic_reviews_max=40, n_fake_accounts=30, campaign_reviews_per_day=20,
                                 campaign_duration_days=1)
    sc = synthgen.generate(spec)
    corpus = corpus_from_synthetic(sc)
    an = rsd.spiky_businesses(corpus.businesses, corpus)
    assert set(an.spiky) == sc.truth.attacked_business_ids
    for b in an.spiky:
        (d,) = sc.truth.campaign_days[b]
        assert [(s.date.isoformat(), s.count) for s in an.spikes if s.business_id == b] == [(d, 20)]
        fp = an.fences[(b, rsd.POSITIVE)]
        assert fp.q3 <= 3 and fp.uof < 20
