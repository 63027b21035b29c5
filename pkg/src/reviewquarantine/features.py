"""User, review and business feature extraction.

All three families are returned as fixed-order tuples of floats so they can be
stacked into matrices. Field orders are exported as ``*_FEATURES``.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .ingest import Corpus, ReviewRecord, UserRecord

USER_FEATURES = (
    "yelping_since", "average_star", "elite_count", "fans",
    "friends_count", "review_count", "total_votes", "total_compliments",
)
REVIEW_FEATURES = ("RD", "EXT", "ETF", "ISR", "PCW", "PP1", "EXC")
BUSINESS_FEATURES = ("MNR", "PR", "NR", "avgRD", "ERD", "ETG", "RL")

POSITIVE_STARS = frozenset({4, 5})
NEGATIVE_STARS = frozenset({1, 2})

FIRST_PERSON = frozenset({"i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves"})

ETF_WINDOW_DAYS = 180
# (lower, upper) inclusive day bounds; None = unbounded
GAP_BUCKETS: tuple[tuple[int, int | None], ...] = ((0, 0), (1, 1), (2, 3), (4, 7), (8, 30), (31, None))


class UserFeatureVector(NamedTuple):
    yelping_since: float
    average_star: float
    elite_count: float
    fans: float
    friends_count: float
    review_count: float
    total_votes: float
    total_compliments: float


class ReviewFeatureVector(NamedTuple):
    RD: float
    EXT: float
    ETF: float
    ISR: float
    PCW: float
    PP1: float
    EXC: float


class BusinessFeatureVector(NamedTuple):
    MNR: float
    PR: float
    NR: float
    avgRD: float
    ERD: float
    ETG: float
    RL: float


# --- text -----------------------------------------------------------------


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Whitespace tokens with leading/trailing punctuation stripped; empties dropped."""
    words = []
    for raw in text.split():
        i, j = 0, len(raw)
        while i < j and _is_punct(raw[i]):
            i += 1
        while j > i and _is_punct(raw[j - 1]):
            j -= 1
        if i < j:
            words.append(raw[i:j])
    return words


def is_capital_word(word: str) -> bool:
    if len(word) < 2:
        return False
    cased = [c for c in word if c.isupper() or c.islower()]
    return bool(cased) and all(c.isupper() for c in cased)


def text_features(text: str) -> tuple[float, float, float, int]:
    """Return ``(PCW, PP1, EXC, token_count)`` for a review text."""
    words = tokenize(text)
    n = len(words)
    exc = float(text.count("!"))
    if n == 0:
        return 0.0, 0.0, exc, 0
    caps = sum(1 for w in words if is_capital_word(w))
    pp1 = sum(1 for w in words if w.lower() in FIRST_PERSON)
    return caps / n, pp1 / n, exc, n


# --- users ----------------------------------------------------------------


def user_features(user: UserRecord) -> UserFeatureVector:
    return UserFeatureVector(
        float(user.yelping_since),
        float(user.average_stars),
        float(user.elite_count),
        float(user.fan_count),
        float(user.friend_count),
        float(user.review_count),
        float(user.total_votes),
        float(user.total_compliments),
    )


# --- reviews / businesses -------------------------------------------------


def _business_stats(reviews: Sequence[ReviewRecord]) -> tuple[float, "object"]:
    mean = sum(r.stars for r in reviews) / len(reviews)
    first = min(r.date for r in reviews)
    return mean, first


def etf(days_after_first: int, window: int = ETF_WINDOW_DAYS) -> float:
    return max(0.0, 1.0 - days_after_first / window)


def _review_vector(
    review: ReviewRecord, mean: float, first, author_review_count: int, etf_window: int
) -> ReviewFeatureVector:
    pcw, pp1, exc, _ = text_features(review.text)
    return ReviewFeatureVector(
        RD=abs(review.stars - mean),
        EXT=1.0 if review.stars in POSITIVE_STARS else 0.0,
        ETF=etf((review.date - first).days, etf_window),
        ISR=1.0 if author_review_count == 1 else 0.0,
        PCW=pcw,
        PP1=pp1,
        EXC=exc,
    )


def review_features(review: ReviewRecord, corpus: Corpus, *, etf_window: int = ETF_WINDOW_DAYS) -> ReviewFeatureVector:
    """Features of one review. RD uses the business mean including this review."""
    reviews = corpus.reviews_of_business(review.business_id)
    mean, first = _business_stats(reviews)
    n_author = len(corpus.review_index_by_user.get(review.user_id, ()))
    return _review_vector(review, mean, first, n_author, etf_window)


def business_review_features(
    business_id: str, corpus: Corpus, *, etf_window: int = ETF_WINDOW_DAYS
) -> dict[str, ReviewFeatureVector]:
    """Features for every review of a business, keyed by review id (date order)."""
    reviews = corpus.reviews_of_business(business_id)
    if not reviews:
        return {}
    mean, first = _business_stats(reviews)
    return {
        r.review_id: _review_vector(r, mean, first, len(corpus.review_index_by_user[r.user_id]), etf_window)
        for r in reviews
    }


def entropy(counts: Sequence[int]) -> float:
    """Shannon entropy, base 2, of a histogram."""
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def gap_bucket(days: int, buckets=GAP_BUCKETS) -> int:
    for i, (lo, hi) in enumerate(buckets):
        if days >= lo and (hi is None or days <= hi):
            return i
    raise ValueError(f"gap {days} not covered by buckets")


def business_features(
    business_id: str, corpus: Corpus, *, etf_window: int = ETF_WINDOW_DAYS, gap_buckets=GAP_BUCKETS
) -> BusinessFeatureVector:
    reviews = corpus.reviews_of_business(business_id)
    if not reviews:
        raise ValueError(f"business {business_id} has no reviews")
    n = len(reviews)
    mean = sum(r.stars for r in reviews) / n
    per_day = Counter(r.date for r in reviews)
    star_hist = Counter(r.stars for r in reviews)
    dates = sorted(r.date for r in reviews)
    gaps = Counter(gap_bucket((b - a).days, gap_buckets) for a, b in zip(dates, dates[1:]))
    lengths = [text_features(r.text)[3] for r in reviews]
    return BusinessFeatureVector(
        MNR=float(max(per_day.values())),
        PR=sum(star_hist[s] for s in POSITIVE_STARS) / n,
        NR=sum(star_hist[s] for s in NEGATIVE_STARS) / n,
        avgRD=sum(abs(r.stars - mean) for r in reviews) / n,
        ERD=entropy([star_hist[s] for s in range(1, 6)]),
        ETG=entropy([gaps[i] for i in range(len(gap_buckets))]),
        RL=sum(lengths) / n,
    )


# --- normalization --------------------------------------------------------


@dataclass(frozen=True)
class NormalizationParams:
    mean: np.ndarray
    std: np.ndarray  # population std; zero for constant dimensions

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (x - self.mean) / safe, 0.0)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z * self.std + self.mean


def zscore_normalize(vectors: Sequence[Sequence[float]]) -> tuple[np.ndarray, NormalizationParams]:
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("zscore_normalize needs at least 2 vectors")
    params = NormalizationParams(mean=x.mean(axis=0), std=x.std(axis=0))
    return params.normalize(x), params
