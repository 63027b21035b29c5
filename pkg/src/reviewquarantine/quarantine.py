"""Trusted business scores, deceptive-rating counts and quarantine decisions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .ingest import Corpus
from .spamscore import SpamScore

DEFAULT_TOLERANCE = 0.5
DEFAULT_THETAS = range(3, 11)


@dataclass(frozen=True)
class TrustScore:
    business_id: str
    t_b: float
    basis_count: int
    fallback: bool


@dataclass(frozen=True)
class QuarantineReport:
    threshold: int
    quarantined: frozenset[str]
    per_user_deceptive_counts: Mapping[str, int]
    percentage: float


@dataclass(frozen=True)
class Evidence:
    user_id: str
    business_id: str
    review_id: str
    stars: int
    t_b: float
    deviation: float


def trusted_score(
    business_id: str,
    review_scores: Mapping[str, SpamScore],
    corpus: Corpus,
    s_threshold: float = 0.5,
    *,
    full_count: bool = False,
) -> TrustScore:
    """Mean star rating over reviews whose spam score is at most ``s_threshold``.

    Falls back to the mean over all reviews when every review is deceptive.
    ``full_count=True`` divides the trusted sum by the total review count
    instead of the number of trusted reviews.
    """
    reviews = corpus.reviews_of_business(business_id)
    if not reviews:
        raise ValueError(f"business {business_id} has no reviews")
    trusted = [r.stars for r in reviews if review_scores[r.review_id].score <= s_threshold]
    if not trusted:
        stars = [r.stars for r in reviews]
        return TrustScore(business_id, sum(stars) / len(stars), len(stars), True)
    denom = len(reviews) if full_count else len(trusted)
    return TrustScore(business_id, sum(trusted) / denom, len(trusted), False)


def is_deceptive_rating(stars: int, t_b: float, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    return stars > t_b + tolerance or stars < t_b - tolerance


def deceptive_evidence(
    popular: Iterable[str],
    spiky: Iterable[str],
    trust: Mapping[str, TrustScore],
    corpus: Corpus,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[Evidence]:
    spiky = set(spiky)
    out = []
    for uid in sorted(set(popular)):
        for r in corpus.reviews_of_user(uid):
            if r.business_id not in spiky:
                continue
            t_b = trust[r.business_id].t_b
            if is_deceptive_rating(r.stars, t_b, tolerance):
                out.append(Evidence(uid, r.business_id, r.review_id, r.stars, t_b, r.stars - t_b))
    return out


def quarantine_sweep(
    popular: Iterable[str],
    spiky: Iterable[str],
    trust: Mapping[str, TrustScore],
    corpus: Corpus,
    thetas: Iterable[int] = DEFAULT_THETAS,
    tolerance: float = DEFAULT_TOLERANCE,
    *,
    strict: bool = False,
) -> list[QuarantineReport]:
    """One report per threshold; a user is quarantined when count >= theta.

    ``strict=True`` requires count > theta instead.
    """
    popular = sorted(set(popular))
    counts = {u: 0 for u in popular}
    for ev in deceptive_evidence(popular, spiky, trust, corpus, tolerance):
        counts[ev.user_id] += 1
    reports = []
    for theta in sorted(set(thetas)):
        q = frozenset(u for u, c in counts.items() if (c > theta if strict else c >= theta))
        pct = len(q) / len(popular) if popular else 0.0
        reports.append(QuarantineReport(theta, q, dict(counts), pct))
    return reports


def min_fraud_reviews(n: int, a: float, fake_star: float = 5, gain: float = 0.5) -> int:
    """Fewest ``fake_star`` reviews lifting a mean of ``a`` over ``n`` reviews by ``gain``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= a <= 5:
        raise ValueError("a must lie in [1, 5]")
    a_, f_, g_ = Fraction(a), Fraction(fake_star), Fraction(gain)
    if f_ <= a_ + g_:
        raise ValueError(f"a {fake_star}-star review cannot raise a mean of {a} by {gain}")
    return math.ceil(g_ * n / (f_ - a_ - g_))
