"""Empirical-CDF suspiciousness and the combined spam score.

Each feature value is turned into a tail probability ``f`` under its
orientation (H: large values suspicious, L: small values suspicious) so that
a low ``f`` is suspicious. The spam score is ``1 - sqrt(mean(f**2))``.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .features import BUSINESS_FEATURES, REVIEW_FEATURES, business_features, business_review_features
from .ingest import Corpus

logger = logging.getLogger(__name__)

H = "H"
L = "L"

DEFAULT_ORIENTATIONS: dict[str, str] = {
    "RD": H, "EXT": H, "ETF": H, "ISR": H, "PCW": H, "PP1": L, "EXC": H,
    "MNR": H, "PR": H, "NR": H, "avgRD": H, "ERD": L, "ETG": L, "RL": L,
}

DEFAULT_S_THRESHOLD = 0.5


class OrientationError(ValueError):
    pass


class EmpiricalCdf:
    """Step-function CDF of a finite sample: ``P(X <= x) = #{v <= x} / N``."""

    __slots__ = ("feature", "values", "cum_counts", "n")

    def __init__(self, values: Iterable[float], feature: str = "") -> None:
        vals = sorted(float(v) for v in values)
        if not vals:
            raise ValueError(f"cannot fit a CDF to an empty sample ({feature or 'unnamed'})")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("CDF sample must be finite")
        uniq: list[float] = []
        cum: list[int] = []
        for i, v in enumerate(vals, 1):
            if uniq and uniq[-1] == v:
                cum[-1] = i
            else:
                uniq.append(v)
                cum.append(i)
        self.feature = feature
        self.values = tuple(uniq)
        self.cum_counts = tuple(cum)
        self.n = len(vals)

    def prob_le(self, x: float) -> float:
        i = bisect.bisect_right(self.values, x)
        return self.cum_counts[i - 1] / self.n if i else 0.0

    def prob_gt(self, x: float) -> float:
        # counted directly rather than 1 - prob_le, so it is the exact ratio
        i = bisect.bisect_right(self.values, x)
        return (self.n - (self.cum_counts[i - 1] if i else 0)) / self.n

    @property
    def degenerate(self) -> bool:
        return len(self.values) == 1


def fit_cdf(values: Iterable[float], feature: str = "") -> EmpiricalCdf:
    return EmpiricalCdf(values, feature)


def f_value(cdf: EmpiricalCdf, x: float, direction: str) -> float:
    if direction == H:
        return cdf.prob_gt(x)
    if direction == L:
        return cdf.prob_le(x)
    raise OrientationError(f"direction must be H or L, got {direction!r}")


def combine(f_values: Mapping[str, float] | Sequence[float]) -> float:
    vals = list(f_values.values()) if isinstance(f_values, Mapping) else list(f_values)
    if not vals:
        raise ValueError("combine needs at least one f-value")
    if any(not 0.0 <= f <= 1.0 for f in vals):
        raise ValueError("f-values must lie in [0, 1]")
    return 1.0 - math.sqrt(sum(f * f for f in vals) / len(vals))


@dataclass(frozen=True)
class SpamScore:
    subject_id: str
    kind: str  # "review" | "business"
    f_values: Mapping[str, float]  # features excluded as constant are absent
    score: float
    flagged: bool
    excluded: tuple[str, ...] = ()

    @property
    def degenerate(self) -> bool:
        return not self.f_values


def load_orientations(path: Path | str) -> dict[str, str]:
    """Read a ``feature=H|L`` table; blank lines and ``#`` comments are ignored.

    Unlisted features keep their default direction.
    """
    table = dict(DEFAULT_ORIENTATIONS)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise OrientationError(f"{path}:{lineno}: expected feature=H|L")
            name, direction = (s.strip() for s in line.split("=", 1))
            if name not in DEFAULT_ORIENTATIONS:
                raise OrientationError(f"{path}:{lineno}: unknown feature {name!r}")
            if direction.upper() not in (H, L):
                raise OrientationError(f"{path}:{lineno}: direction must be H or L, got {direction!r}")
            table[name] = direction.upper()
    return table


def _score_population(
    kind: str,
    vectors: Mapping[str, Sequence[float]],
    names: Sequence[str],
    orientations: Mapping[str, str],
    s_threshold: float,
) -> dict[str, SpamScore]:
    cdfs = {}
    excluded = []
    for j, name in enumerate(names):
        cdf = fit_cdf((v[j] for v in vectors.values()), name)
        if cdf.degenerate:
            excluded.append(name)
        else:
            cdfs[j] = cdf
    if excluded and len(vectors) > 1:
        logger.debug("%s population: constant features %s excluded", kind, excluded)
    out = {}
    for sid, v in vectors.items():
        fv = {names[j]: f_value(cdf, v[j], orientations[names[j]]) for j, cdf in cdfs.items()}
        if fv:
            s = combine(fv)
            flagged = s > s_threshold
        else:
            s, flagged = 0.0, False
        out[sid] = SpamScore(sid, kind, fv, s, flagged, tuple(excluded))
    return out


def score_reviews(
    business_id: str,
    corpus: Corpus,
    orientations: Mapping[str, str] = DEFAULT_ORIENTATIONS,
    s_threshold: float = DEFAULT_S_THRESHOLD,
    *,
    etf_window: int = 180,
) -> dict[str, SpamScore]:
    """Score every review of a business against that business's own reviews."""
    vectors = business_review_features(business_id, corpus, etf_window=etf_window)
    if not vectors:
        raise ValueError(f"business {business_id} has no reviews")
    return _score_population("review", vectors, REVIEW_FEATURES, orientations, s_threshold)


@dataclass
class BusinessScores:
    scores: dict[str, SpamScore] = field(default_factory=dict)
    degenerate_population: bool = False


def score_businesses(
    business_ids: Iterable[str],
    corpus: Corpus,
    orientations: Mapping[str, str] = DEFAULT_ORIENTATIONS,
    s_threshold: float = DEFAULT_S_THRESHOLD,
) -> BusinessScores:
    """Score businesses against the population of the given businesses.

    If every business feature is constant across the population, scores are
    reported but nothing is flagged and ``degenerate_population`` is set.
    """
    ids = sorted(set(business_ids))
    if len(ids) < 2:
        raise ValueError("business scoring needs a population of at least 2 businesses")
    vectors = {b: business_features(b, corpus) for b in ids}
    scores = _score_population("business", vectors, BUSINESS_FEATURES, orientations, s_threshold)
    degenerate = all(s.degenerate for s in scores.values())
    if degenerate:
        logger.warning("business population is degenerate: all features constant")
    return BusinessScores(scores, degenerate)


def score_business(
    business_id: str,
    corpus: Corpus,
    orientations: Mapping[str, str] = DEFAULT_ORIENTATIONS,
    s_threshold: float = DEFAULT_S_THRESHOLD,
    population: Iterable[str] | None = None,
) -> SpamScore:
    pop = set(population) if population is not None else set(corpus.review_index_by_business)
    pop.add(business_id)
    return score_businesses(pop, corpus, orientations, s_threshold).scores[business_id]
