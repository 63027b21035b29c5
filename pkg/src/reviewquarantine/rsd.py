"""Review spike detection on per-business daily review counts.

Positive (4-5 star) and negative (1-2 star) reviews are tallied per day. For
each polarity, Tukey hinges over the counts of active days give the outlier
fences; a day whose count is strictly above the upper fence is a spike.
"""

from __future__ import annotations

import datetime as dt
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .features import NEGATIVE_STARS, POSITIVE_STARS
from .ingest import DEFAULT_WINDOW, Corpus

FENCE_FACTOR = 1.5
MIN_ACTIVE_DAYS = 5

POSITIVE = "positive"
NEGATIVE = "negative"
POLARITIES = (POSITIVE, NEGATIVE)


class NotEnoughData(Exception):
    """Too few active days to compute fences for a polarity."""


@dataclass(frozen=True)
class DailyCountSeries:
    business_id: str
    window: tuple[dt.date, dt.date]
    positive_counts: Mapping[dt.date, int]
    negative_counts: Mapping[dt.date, int]
    neutral_count: int = 0

    def counts(self, polarity: str) -> Mapping[dt.date, int]:
        if polarity == POSITIVE:
            return self.positive_counts
        if polarity == NEGATIVE:
            return self.negative_counts
        raise ValueError(f"unknown polarity {polarity!r}")


@dataclass(frozen=True)
class FencePair:
    q1: float
    q2: float
    q3: float
    iqr: float
    uof: float
    lof: float


@dataclass(frozen=True)
class Spike:
    business_id: str
    date: dt.date
    polarity: str
    count: int
    fence: float


def build_series(business_id: str, corpus: Corpus, window=DEFAULT_WINDOW) -> DailyCountSeries:
    if business_id not in corpus.businesses:
        raise KeyError(business_id)
    start, end = window
    pos: Counter = Counter()
    neg: Counter = Counter()
    neutral = 0
    for r in corpus.reviews_of_business(business_id):
        if not start <= r.date <= end:
            continue
        if r.stars in POSITIVE_STARS:
            pos[r.date] += 1
        elif r.stars in NEGATIVE_STARS:
            neg[r.date] += 1
        else:
            neutral += 1
    return DailyCountSeries(
        business_id,
        (start, end),
        dict(sorted(pos.items())),
        dict(sorted(neg.items())),
        neutral,
    )


def _median(sorted_vals: Sequence[float]) -> float:
    n = len(sorted_vals)
    mid = n // 2
    if n % 2:
        return float(sorted_vals[mid])
    return (sorted_vals[mid - 1] + sorted_vals[mid]) / 2


def quartiles(values: Iterable[float]) -> tuple[float, float, float]:
    """Tukey hinges: halves include the median when the length is odd."""
    v = sorted(values)
    n = len(v)
    if n == 0:
        raise ValueError("quartiles of an empty list")
    half = (n + 1) // 2
    return _median(v[:half]), _median(v), _median(v[n - half:])


def fence_pair(values: Iterable[float], factor: float = FENCE_FACTOR) -> FencePair:
    q1, q2, q3 = quartiles(values)
    iqr = q3 - q1
    return FencePair(q1, q2, q3, iqr, q3 + factor * iqr, q1 - factor * iqr)


def fences(
    series: DailyCountSeries, polarity: str, min_active_days: int = MIN_ACTIVE_DAYS, factor: float = FENCE_FACTOR
) -> FencePair:
    counts = list(series.counts(polarity).values())
    if len(counts) < max(min_active_days, 1):
        raise NotEnoughData(
            f"{series.business_id}: {len(counts)} active {polarity} days < {min_active_days}"
        )
    return fence_pair(counts, factor)


def detect_spikes(
    series: DailyCountSeries, fences_pos: FencePair | None, fences_neg: FencePair | None
) -> list[Spike]:
    """Days whose count is strictly above the polarity's upper fence, by date."""
    spikes = []
    for polarity, fp in ((POSITIVE, fences_pos), (NEGATIVE, fences_neg)):
        if fp is None:
            continue
        for day, count in series.counts(polarity).items():
            if count > fp.uof:
                spikes.append(Spike(series.business_id, day, polarity, count, fp.uof))
    spikes.sort(key=lambda s: (s.date, POLARITIES.index(s.polarity)))
    return spikes


@dataclass
class SpikeAnalysis:
    """Everything the spike stage produces for a set of businesses."""

    series: dict[str, DailyCountSeries] = field(default_factory=dict)
    fences: dict[tuple[str, str], FencePair] = field(default_factory=dict)
    skipped: dict[tuple[str, str], int] = field(default_factory=dict)  # active-day count when too few
    spikes: list[Spike] = field(default_factory=list)
    spiky: list[str] = field(default_factory=list)
    n_businesses: int = 0

    @property
    def spiky_fraction(self) -> float:
        return len(self.spiky) / self.n_businesses if self.n_businesses else 0.0


def spiky_businesses(
    business_ids: Iterable[str],
    corpus: Corpus,
    window=DEFAULT_WINDOW,
    min_active_days: int = MIN_ACTIVE_DAYS,
    factor: float = FENCE_FACTOR,
) -> SpikeAnalysis:
    out = SpikeAnalysis()
    for b in sorted(set(business_ids)):
        out.n_businesses += 1
        s = build_series(b, corpus, window)
        out.series[b] = s
        fp = {}
        for pol in POLARITIES:
            try:
                fp[pol] = out.fences[(b, pol)] = fences(s, pol, min_active_days, factor)
            except NotEnoughData:
                fp[pol] = None
                out.skipped[(b, pol)] = len(s.counts(pol))
        found = detect_spikes(s, fp[POSITIVE], fp[NEGATIVE])
        out.spikes.extend(found)
        if found:
            out.spiky.append(b)
    return out
