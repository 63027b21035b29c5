"""Acceptance criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

from __future__ import annotations

import datetime as dt
import itertools
import json
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from builders import analyze, corpus_from_synthetic, corpus_of, review
from conftest import config_for
from reviewquarantine import clustering, features, pipeline, quarantine, rsd, spamscore, synthgen
from reviewquarantine.ingest import DEFAULT_WINDOW

# --- oracles -----------------------------------------------------------------


def hinge_oracle(values):
    """Tukey hinges by depth: median depth (n+1)/2, hinge depth (floor(median depth)+1)/2."""
    v = sorted(values)
    n = len(v)

    def at_depth(seq, depth):
        lo = math.floor(depth)
        return seq[lo - 1] if depth == lo else (seq[lo - 1] + seq[lo]) / 2

    d_med = (n + 1) / 2
    d_hinge = (math.floor(d_med) + 1) / 2
    return at_depth(v, d_hinge), at_depth(v, d_med), at_depth(v[::-1], d_hinge)


def spike_scan_oracle(business_id, pos, neg, min_active_days):
    found = []
    for polarity, counts in (("positive", pos), ("negative", neg)):
        if len(counts) < min_active_days:
            continue
        q1, _, q3 = hinge_oracle(list(counts.values()))
        uof = q3 + 1.5 * (q3 - q1)
        for d in sorted(counts):
            if counts[d] > uof:
                found.append((d, polarity, counts[d]))
    return sorted(found, key=lambda t: (t[0], t[1] != "positive"))


def fraud_oracle(n, a, fake=5, gain=Fraction(1, 2)):
    """Smallest m with (n*a + m*fake)/(n+m) >= a + gain, by direct mean recomputation."""
    a = Fraction(a)
    m = 0
    while (n * a + m * fake) / (n + m) < a + gain:
        m += 1
    return m


def extract_oracle(popular, corpus, min_reviews=10):
    """Literal nested-loop transcription of the business extraction procedure."""
    all_reviews = list(corpus.reviews.values())
    found = []
    for u in popular:
        for r in all_reviews:
            if r.user_id != u:
                continue
            b = r.business_id
            total = sum(1 for s in all_reviews if s.business_id == b)
            if total >= min_reviews and b not in found:
                found.append(b)
    return found


# --- criteria ------------------------------------------------------------------


@pytest.mark.acceptance("quartile/fence oracle")
def test_quartile_fence_oracle():
    t0 = time.perf_counter()
    # Quartiles depend only on the multiset, so every sorted list of length <= 12 over
    # {0..5} covers all such lists up to order; lists of length <= 6 are also checked in
    # every order.
    checked = 0
    for n in range(1, 13):
        for combo in itertools.combinations_with_replacement(range(6), n):
            q = rsd.quartiles(combo)
            want = hinge_oracle(combo)
            assert q == want, combo
            fp = rsd.fence_pair(combo)
            iqr = want[2] - want[0]
            assert (fp.iqr, fp.uof, fp.lof) == (iqr, want[2] + 1.5 * iqr, want[0] - 1.5 * iqr)
            checked += 1
    for n in range(1, 7):
        for lst in itertools.product(range(6), repeat=n):
            assert rsd.quartiles(lst) == hinge_oracle(lst)
            checked += 1
    elapsed = time.perf_counter() - t0
    print(f"quartile oracle: {checked} lists in {elapsed:.2f}s")
    assert elapsed < 10


@pytest.mark.acceptance("spike oracle")
def test_spike_oracle():
    fp = rsd.FencePair(q1=2, q2=3, q3=4, iqr=2, uof=10, lof=-1)
    d11, d10 = dt.date(2015, 6, 1), dt.date(2015, 6, 2)
    s = rsd.DailyCountSeries("X", DEFAULT_WINDOW, {d11: 11, d10: 10}, {})
    assert [(sp.date, sp.count) for sp in rsd.detect_spikes(s, fp, None)] == [(d11, 11)]

    rng = random.Random(20240601)
    t0 = time.perf_counter()
    for i in range(1000):
        days = rng.sample(range(3000), rng.randint(0, 60))
        pos, neg = {}, {}
        for dd in days:
            d = dt.date(2008, 1, 1) + dt.timedelta(days=dd)
            target = pos if rng.random() < 0.7 else neg
            target[d] = rng.choice([1, 1, 1, 2, 2, 3, 4]) if rng.random() > 0.05 else rng.randint(5, 30)
        series = rsd.DailyCountSeries(f"B{i}", DEFAULT_WINDOW, dict(sorted(pos.items())), dict(sorted(neg.items())))
        fps = {}
        for pol in rsd.POLARITIES:
            try:
                fps[pol] = rsd.fences(series, pol)
            except rsd.NotEnoughData:
                fps[pol] = None
        got = [(sp.date, sp.polarity, sp.count) for sp in rsd.detect_spikes(series, fps["positive"], fps["negative"])]
        assert got == spike_scan_oracle(f"B{i}", pos, neg, rsd.MIN_ACTIVE_DAYS)
    assert time.perf_counter() - t0 < 10


@pytest.mark.acceptance("CDF/orientation/combination oracles")
def test_cdf_and_combination_oracles():
    t0 = time.perf_counter()
    rng = random.Random(5)
    for _ in range(300):
        n = rng.randint(1, 50)
        pop = [rng.choice([0, 0.5, 1, 2, 3, 7.25]) if rng.random() < 0.5 else rng.randint(-5, 5) for _ in range(n)]
        cdf = spamscore.fit_cdf(pop)
        for x in pop + [min(pop) - 1, max(pop) + 1]:
            p = Fraction(sum(1 for v in pop if v <= x), n)
            assert spamscore.f_value(cdf, x, "L") == float(p)
            assert spamscore.f_value(cdf, x, "H") == float(1 - p)
    assert spamscore.combine([0.0] * 7) == 1.0
    assert spamscore.combine([1.0] * 7) == 0.0
    assert abs(spamscore.combine({"a": 0.6, "b": 0.8}) - 0.2928932188134524) <= 1e-12
    assert time.perf_counter() - t0 < 5


@pytest.mark.acceptance("k-means/BIC")
def test_kmeans_bic():
    rng = np.random.default_rng(11)
    for s in range(100):
        x = rng.normal(size=(rng.integers(10, 60), 3)) + rng.integers(0, 3, size=(1, 3))
        c = clustering.kmeans(x, int(rng.integers(1, 6)), seed=s)
        assert all(b <= a + 1e-9 for a, b in zip(c.history, c.history[1:])), c.history

    x = rng.normal(size=(25, 4))
    c1 = clustering.kmeans(x, 1)
    assert np.allclose(c1.centroids[0], x.mean(axis=0), atol=1e-9, rtol=0)

    pts = rng.normal(size=(12, 2)) * [3, 1]
    best = math.inf
    for mask in range(1, 2 ** 11):  # point 11 always in part 0; both parts nonempty
        lab = np.array([(mask >> i) & 1 for i in range(12)])
        if lab.sum() == 0:
            continue
        dist = sum(((pts[lab == j] - pts[lab == j].mean(axis=0)) ** 2).sum() for j in (0, 1))
        if dist < best:
            best, best_lab = dist, lab
    runs = [clustering.kmeans(pts, 2, seed=s) for s in range(10)]
    top = min(runs, key=lambda c: c.distortion)
    assert abs(top.distortion - best) < 1e-9
    same = (top.labels == best_lab).all() or (top.labels == 1 - best_lab).all()
    assert same

    sq = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    score = clustering.bic(clustering.kmeans(sq, 1), sq)
    assert abs(score.log_likelihood - (-3.553893700386033)) <= 1e-9
    assert abs(score.bic - (-5.633335242065868)) <= 1e-9

    data = rng.normal(size=(40, 3))
    penalties = [clustering.bic(clustering.kmeans(data, k, seed=1), data).penalty for k in range(1, 9)]
    assert all(b > a for a, b in zip(penalties, penalties[1:]))


@pytest.mark.acceptance("planted recovery end-to-end")
def test_planted_recovery(default_run):
    sc, cfg, manifest, seconds = default_run
    truth = sc.truth
    out = cfg.out_dir
    assert seconds < 60

    from reviewquarantine.ingest import load_snapshot
    from reviewquarantine.reports import read_csv

    corpus = load_snapshot(out / pipeline.SNAPSHOT)
    ids = list(corpus.users)
    z, params = features.zscore_normalize([features.user_features(corpus.users[u]) for u in ids])
    sweep = clustering.sweep_k(z, 2, 6, cfg.restarts, cfg.seed, ids=ids)
    ref = clustering.reference_year(corpus)
    for k, c in sweep.per_k.items():
        assert set(clustering.select_popular_cluster(c, params, ref)[1]) == truth.popular_user_ids, k
    assert [int(r["popular_size"]) for r in read_csv(out / pipeline.BIC_CSV)] == [10] * 5

    assert {r["user_id"] for r in read_csv(out / pipeline.POPULAR_CSV)} == truth.popular_user_ids
    assert {r["business_id"] for r in read_csv(out / pipeline.SPIKY_CSV)} == truth.attacked_business_ids
    q3 = next(r for r in read_csv(out / pipeline.QUARANTINE_CSV) if r["threshold"] == "3")
    assert set(q3["user_ids"].split(";")) == truth.spammer_user_ids
    print(f"end-to-end runtime {seconds:.1f}s")


def _random_spec(rng: random.Random) -> synthgen.ScenarioSpec:
    n_pop = rng.randint(1, 6)
    n_biz = rng.randint(3, 12)
    return synthgen.ScenarioSpec(
        seed=rng.randrange(2 ** 31),
        n_ordinary_users=rng.randint(60, 140),
        n_popular_users=n_pop,
        n_spammer_popular_users=rng.randint(0, n_pop),
        n_businesses=n_biz,
        n_attacked_businesses=rng.randint(0, n_biz),
        organic_reviews_min=15,
        organic_reviews_max=rng.randint(15, 35),
        popular_reviewers_per_business=rng.randint(1, 3),
        spammers_per_attack=rng.randint(1, 2),
        n_fake_accounts=rng.randint(24, 40),
        campaign_reviews_per_day=rng.randint(9, 12),
    )


@pytest.mark.acceptance("quarantine monotonicity")
def test_quarantine_monotonicity():
    rng = random.Random(314)
    nonempty = 0
    for _ in range(200):
        sc = synthgen.generate(_random_spec(rng))
        _, _, reports = analyze(corpus_from_synthetic(sc), k_min=2, k_max=3, restarts=1)
        by_theta = {r.threshold: r.quarantined for r in reports}
        for theta in range(3, 10):
            assert by_theta[theta + 1] <= by_theta[theta]
        nonempty += bool(by_theta[3])
    print(f"{nonempty}/200 scenarios quarantined someone at threshold 3")
    assert nonempty > 0


@pytest.mark.acceptance("fraud-review lower bound")
def test_min_fraud_reviews():
    t0 = time.perf_counter()
    assert quarantine.min_fraud_reviews(70, 1.0, 5) == 10
    for a2 in range(2, 9):  # a = 1.0, 1.5, ..., 4.0
        a = Fraction(a2, 2)
        for n in range(1, 201):
            assert quarantine.min_fraud_reviews(n, float(a), 5) == fraud_oracle(n, a), (n, a)
    assert time.perf_counter() - t0 < 5


@pytest.mark.acceptance("determinism")
def test_determinism(default_run, tmp_path):
    sc, cfg, manifest, _ = default_run
    from dataclasses import replace

    again = pipeline.run_pipeline(replace(cfg, out_dir=tmp_path / "again"))
    assert again == manifest
    a = (cfg.out_dir / pipeline.MANIFEST).read_bytes()
    b = (tmp_path / "again" / pipeline.MANIFEST).read_bytes()
    assert a == b
    assert json.loads(a)["outputs"]


@pytest.mark.acceptance("business extraction oracle")
def test_extraction_oracle():
    rng = random.Random(99)
    for trial in range(60):
        n_users, n_biz = rng.randint(3, 25), rng.randint(1, 30)
        n_rev = rng.randint(0, 1000 if trial % 10 == 0 else 300)
        revs = [
            review(f"R{i}", f"U{rng.randrange(n_users)}", f"B{rng.randrange(n_biz)}", rng.randint(1, 5),
                   dt.date(2010, 1, 1) + dt.timedelta(days=rng.randrange(2000)))
            for i in range(n_rev)
        ]
        corpus = corpus_of(revs, extra_users=[f"U{i}" for i in range(n_users)])
        popular = rng.sample(sorted(corpus.users), rng.randint(0, min(6, len(corpus.users))))
        thr = rng.choice([1, 5, 10, 20])
        got = clustering.extract_businesses(popular, corpus, thr)
        want = extract_oracle(popular, corpus, thr)
        assert got == sorted(want)
        assert len(want) == len(set(want))
