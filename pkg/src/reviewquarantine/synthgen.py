"""Synthetic review corpora with planted popular users, spam campaigns and spammers.

The generator works business by business. Organic reviews are grouped into
per-day batches of 1-3 reviews per polarity, and the layout is redrawn until
no organic day exceeds its polarity's upper fence. Attacked businesses then
receive a burst campaign of 5-star reviews on consecutive days, sized well
above the organic fence. Every random draw comes from a Philox stream keyed
by ``(seed, stream, index)`` so the output does not depend on call order.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .features import NEGATIVE_STARS, POSITIVE_STARS
from .ingest import DEFAULT_WINDOW, write_ndjson
from .reports import atomic_write_text
from .rsd import fence_pair

MAX_ORGANIC_PER_DAY = 3
# minimum ratio of campaign reviews per day to the largest possible organic q3
CAMPAIGN_MARGIN = 3

_VOTE_LABELS = ("cool", "funny", "useful")
_COMPLIMENT_LABELS = (
    "cool", "cute", "funny", "hot", "list", "more", "note", "photos", "plain", "profile", "writer",
)

_ORGANIC_PHRASES = (
    "i came here with my family last weekend",
    "we ordered the lunch special and a salad",
    "my friend liked the service more than i did",
    "the staff were friendly and quick",
    "parking was a little hard to find",
    "i would probably come back for the soup",
    "our table was ready on time",
    "prices are about what you would expect",
    "the place was busy but not too loud",
    "i think the dessert was the best part",
    "we sat outside and the weather was nice",
    "my order took a while but it was worth it",
    "the menu has plenty of options",
    "i had the pasta and it was fine",
)
_SPAM_PHRASES = (
    "BEST PLACE EVER", "AMAZING FOOD", "MUST TRY", "FIVE STARS", "LOVE IT",
    "GREAT SERVICE", "HIGHLY RECOMMEND", "WOW",
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 7
    n_ordinary_users: int = 990
    n_popular_users: int = 10
    n_spammer_popular_users: int = 5
    n_businesses: int = 100
    n_attacked_businesses: int = 40
    organic_reviews_min: int = 40
    organic_reviews_max: int = 70
    popular_reviewers_per_business: int = 2
    spammers_per_attack: int = 2
    n_fake_accounts: int = 60
    campaign_reviews_per_day: int = 12
    campaign_duration_days: int = 2
    campaign_star: int = 5
    window_start: dt.date = DEFAULT_WINDOW[0]
    window_end: dt.date = DEFAULT_WINDOW[1]

    @property
    def n_honest_popular_users(self) -> int:
        return self.n_popular_users - self.n_spammer_popular_users

    def validate(self) -> None:
        if self.n_popular_users < 1:
            raise ScenarioError("need at least one popular user")
        if not 0 <= self.n_spammer_popular_users <= self.n_popular_users:
            raise ScenarioError("n_spammer_popular_users must be in [0, n_popular_users]")
        if not 0 <= self.n_attacked_businesses <= self.n_businesses:
            raise ScenarioError("n_attacked_businesses must be in [0, n_businesses]")
        if self.n_businesses < 1 or self.n_ordinary_users < 1:
            raise ScenarioError("need at least one business and one ordinary user")
        if not 1 <= self.organic_reviews_min <= self.organic_reviews_max:
            raise ScenarioError("need 1 <= organic_reviews_min <= organic_reviews_max")
        if self.campaign_duration_days < 1:
            raise ScenarioError("campaign must last at least one day")
        if self.campaign_reviews_per_day < CAMPAIGN_MARGIN * MAX_ORGANIC_PER_DAY:
            raise ScenarioError(
                f"campaign_reviews_per_day must be >= {CAMPAIGN_MARGIN * MAX_ORGANIC_PER_DAY} "
                "(3x the largest organic daily q3)"
            )
        if self.campaign_star not in POSITIVE_STARS:
            raise ScenarioError("campaign_star must be a positive rating (4 or 5)")
        if self.n_fake_accounts > self.n_ordinary_users:
            raise ScenarioError("n_fake_accounts cannot exceed n_ordinary_users")
        if self.popular_reviewers_per_business < 1:
            raise ScenarioError("popular_reviewers_per_business must be >= 1")
        slots = self.campaign_reviews_per_day * self.campaign_duration_days
        n_sp = min(self.spammers_per_attack, self.n_spammer_popular_users)
        if self.n_attacked_businesses and slots - n_sp > self.n_fake_accounts:
            raise ScenarioError(f"campaign needs {slots - n_sp} fake accounts, only {self.n_fake_accounts}")
        span = (self.window_end - self.window_start).days
        if span < 3 * 365:
            raise ScenarioError("window must span at least three years")


@dataclass
class GroundTruth:
    popular_user_ids: set[str] = field(default_factory=set)
    spammer_user_ids: set[str] = field(default_factory=set)
    attacked_business_ids: set[str] = field(default_factory=set)
    planted_spam_review_ids: set[str] = field(default_factory=set)
    campaign_days: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "popular_user_ids": sorted(self.popular_user_ids),
            "spammer_user_ids": sorted(self.spammer_user_ids),
            "attacked_business_ids": sorted(self.attacked_business_ids),
            "planted_spam_review_ids": sorted(self.planted_spam_review_ids),
            "campaign_days": {k: v for k, v in sorted(self.campaign_days.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GroundTruth":
        return cls(
            set(d["popular_user_ids"]),
            set(d["spammer_user_ids"]),
            set(d["attacked_business_ids"]),
            set(d["planted_spam_review_ids"]),
            {k: list(v) for k, v in d.get("campaign_days", {}).items()},
        )


@dataclass
class SyntheticCorpus:
    users: list[dict[str, Any]]
    reviews: list[dict[str, Any]]
    businesses: list[dict[str, Any]]
    truth: GroundTruth

    def write(self, out_dir: Path | str) -> dict[str, Path]:
        out = Path(out_dir)
        paths = {
            "users": out / "users.json",
            "reviews": out / "reviews.json",
            "businesses": out / "businesses.json",
            "ground_truth": out / "ground_truth.json",
        }
        write_ndjson(paths["users"], self.users)
        write_ndjson(paths["reviews"], self.reviews)
        write_ndjson(paths["businesses"], self.businesses)
        atomic_write_text(paths["ground_truth"], json.dumps(self.truth.to_dict(), indent=2, sort_keys=True) + "\n")
        return paths


_STREAMS = {"plan": 1, "business": 2, "user": 3, "text": 4}


def _rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, _STREAMS[stream], index])))


def _organic_stars(rng: np.random.Generator, quality: int, n: int, attacked: bool) -> list[int]:
    # attacked businesses keep a tight organic rating profile so their trusted
    # score stays near ``quality`` whichever organic reviews get flagged
    lo, hi = (0.0, 0.05) if attacked else (0.1, 0.2)
    out = []
    for u in rng.random(n):
        s = quality - 1 if u < lo else quality + 1 if u < hi else quality
        out.append(min(5, max(1, s)))
    return out


def _chunks(rng: np.random.Generator, n: int) -> list[int]:
    sizes = []
    left = n
    while left > 0:
        s = int(min(left, rng.integers(1, MAX_ORGANIC_PER_DAY + 1)))
        sizes.append(s)
        left -= s
    return sizes


def _organic_text(rng: np.random.Generator) -> str:
    k = int(rng.integers(2, 5))
    parts = [_ORGANIC_PHRASES[i] for i in rng.choice(len(_ORGANIC_PHRASES), size=k, replace=False)]
    text = ". ".join(p[0].upper() + p[1:] for p in parts) + "."
    return text.replace(" i ", " I ")


def _spam_text(rng: np.random.Generator) -> str:
    k = int(rng.integers(1, 3))
    parts = [_SPAM_PHRASES[i] for i in rng.choice(len(_SPAM_PHRASES), size=k, replace=False)]
    return " ".join(p + "!" * int(rng.integers(2, 5)) for p in parts)


@dataclass
class _BusinessPlan:
    business_id: str
    quality: int
    attacked: bool
    popular_reviewers: list[str]
    spammers: list[str]


def _layout_business(
    rng: np.random.Generator, spec: ScenarioSpec, plan: _BusinessPlan, ordinary_ids: list[str], fake_ids: list[str]
) -> tuple[list[dict[str, Any]], list[str], list[str]]:
    """Reviews for one business; returns (reviews, planted spam ids, campaign days)."""
    n_org = int(rng.integers(spec.organic_reviews_min, spec.organic_reviews_max + 1))
    n_org = max(n_org, len(plan.popular_reviewers))
    stars = [plan.quality] * len(plan.popular_reviewers)
    stars += _organic_stars(rng, plan.quality, n_org - len(plan.popular_reviewers), plan.attacked)
    authors = list(plan.popular_reviewers)
    pool = [u for u in ordinary_ids]
    authors += [pool[i] for i in rng.choice(len(pool), size=n_org - len(plan.popular_reviewers), replace=False)] \
        if n_org - len(plan.popular_reviewers) <= len(pool) else \
        [pool[i] for i in rng.integers(0, len(pool), size=n_org - len(plan.popular_reviewers))]

    total_days = (spec.window_end - spec.window_start).days + 1
    # business opens somewhere before the last two years of the window
    open_offset = int(rng.integers(0, total_days - 2 * 365))
    span = total_days - open_offset

    groups = {
        "pos": [i for i, s in enumerate(stars) if s in POSITIVE_STARS],
        "neg": [i for i, s in enumerate(stars) if s in NEGATIVE_STARS],
        "neu": [i for i, s in enumerate(stars) if s not in POSITIVE_STARS and s not in NEGATIVE_STARS],
    }
    n_campaign = spec.campaign_reviews_per_day * spec.campaign_duration_days if plan.attacked else 0

    for _attempt in range(200):
        day_of: dict[int, int] = {}
        pos_days: dict[int, int] = {}
        neg_days: dict[int, int] = {}
        for name, idx in groups.items():
            if not idx:
                continue
            order = [idx[i] for i in rng.permutation(len(idx))]
            sizes = _chunks(rng, len(order))
            days = rng.choice(span, size=len(sizes), replace=False)
            pos = 0
            for size, d in zip(sizes, days):
                for i in order[pos:pos + size]:
                    day_of[i] = int(d)
                pos += size
                if name == "pos":
                    pos_days[int(d)] = size
                elif name == "neg":
                    neg_days[int(d)] = size
        campaign: list[int] = []
        if plan.attacked:
            free = [d for d in range(span - spec.campaign_duration_days + 1)
                    if all(d + j not in pos_days for j in range(spec.campaign_duration_days))]
            if not free:
                continue
            c0 = int(free[int(rng.integers(len(free)))])
            campaign = [c0 + j for j in range(spec.campaign_duration_days)]
        pos_series = dict(pos_days)
        for d in campaign:
            pos_series[d] = spec.campaign_reviews_per_day
        ok = True
        for series, planted in ((pos_series, set(campaign)), (neg_days, set())):
            if not series:
                continue
            fp = fence_pair(series.values())
            for d, c in series.items():
                if (d in planted) != (c > fp.uof):
                    ok = False
        if ok:
            break
    else:
        raise ScenarioError(f"could not lay out {plan.business_id} without organic spikes")

    if campaign:
        organic_q3 = fence_pair(pos_days.values()).q3 if pos_days else 0.0
        assert spec.campaign_reviews_per_day >= CAMPAIGN_MARGIN * organic_q3

    start = spec.window_start + dt.timedelta(days=open_offset)
    reviews = []
    trng = _rng(spec.seed, "text", int(plan.business_id[1:]))
    for i in range(n_org):
        reviews.append(
            {
                "review_id": f"{plan.business_id}-{i:04d}",
                "user_id": authors[i],
                "business_id": plan.business_id,
                "stars": stars[i],
                "date": (start + dt.timedelta(days=day_of[i])).isoformat(),
                "text": _organic_text(trng),
            }
        )
    spam_ids = []
    if campaign:
        writers = list(plan.spammers)
        n_fake = n_campaign - len(writers)
        writers += [fake_ids[i] for i in rng.choice(len(fake_ids), size=n_fake, replace=False)]
        writers = [writers[i] for i in rng.permutation(len(writers))]
        for j, w in enumerate(writers):
            d = campaign[j // spec.campaign_reviews_per_day]
            rid = f"{plan.business_id}-S{j:03d}"
            spam_ids.append(rid)
            reviews.append(
                {
                    "review_id": rid,
                    "user_id": w,
                    "business_id": plan.business_id,
                    "stars": spec.campaign_star,
                    "date": (start + dt.timedelta(days=d)).isoformat(),
                    "text": _spam_text(trng),
                }
            )
    days = [(start + dt.timedelta(days=d)).isoformat() for d in campaign]
    return reviews, spam_ids, days


def _ordinary_user(rng: np.random.Generator, uid: str, n_reviews: int, first_year: int | None, avg: float | None):
    year = int(rng.integers(2004, 2017))
    if first_year is not None:
        year = min(year, first_year)
    elite: list[int] = []
    if rng.random() < 0.1:
        elite = sorted(int(y) for y in rng.choice(np.arange(year, 2017), size=min(2, 2017 - year), replace=False))
    stars = avg if avg is not None else float(np.clip(rng.normal(3.7, 0.5), 1.0, 5.0))
    return {
        "user_id": uid,
        "yelping_since": f"{year}-{int(rng.integers(1, 13)):02d}",
        "average_stars": round(stars, 2),
        "elite": elite,
        "fans": int(rng.poisson(1.2)),
        "friend_count": int(rng.poisson(150)),
        "review_count": n_reviews + int(rng.poisson(20)),
        "votes": {k: int(rng.poisson(28)) for k in _VOTE_LABELS},
        "compliments": {k: int(rng.poisson(0.8)) for k in _COMPLIMENT_LABELS},
    }


def _popular_user(rng: np.random.Generator, uid: str, n_reviews: int, avg: float | None):
    year = int(rng.integers(2005, 2010))
    n_elite = int(rng.integers(8, 12))
    elite = sorted(int(y) for y in rng.choice(np.arange(2005, 2017), size=n_elite, replace=False))

    def pos_normal(mu: float, sd: float) -> int:
        return max(0, int(round(rng.normal(mu, sd))))

    return {
        "user_id": uid,
        "yelping_since": f"{year}-{int(rng.integers(1, 13)):02d}",
        "average_stars": round(avg if avg is not None else float(rng.normal(3.85, 0.05)), 2),
        "elite": elite,
        "fans": pos_normal(550, 25),
        "friend_count": pos_normal(30800, 1500),
        "review_count": n_reviews + pos_normal(2000, 100),
        "votes": {k: pos_normal(25000, 1000) for k in _VOTE_LABELS},
        "compliments": {k: pos_normal(1750, 80) for k in _COMPLIMENT_LABELS},
    }


def generate(spec: ScenarioSpec | None = None) -> SyntheticCorpus:
    """Build a synthetic corpus and its ground truth; deterministic in ``spec.seed``."""
    spec = spec or ScenarioSpec()
    spec.validate()
    prng = _rng(spec.seed, "plan")

    ordinary = [f"U{i:05d}" for i in range(spec.n_ordinary_users)]
    popular = [f"P{i:03d}" for i in range(spec.n_popular_users)]
    spammers = popular[: spec.n_spammer_popular_users]
    honest = popular[spec.n_spammer_popular_users:]
    fakes = [ordinary[i] for i in sorted(prng.choice(len(ordinary), size=spec.n_fake_accounts, replace=False))]
    fake_set = set(fakes)
    organic_pool = [u for u in ordinary if u not in fake_set] or ordinary

    biz_ids = [f"B{i:04d}" for i in range(spec.n_businesses)]
    attacked = sorted(biz_ids[i] for i in prng.choice(spec.n_businesses, size=spec.n_attacked_businesses, replace=False))
    attacked_set = set(attacked)

    n_sp = min(spec.spammers_per_attack, len(spammers))
    plans = []
    for b in biz_ids:
        is_att = b in attacked_set
        quality = 4 if is_att else int(prng.choice([2, 3, 4]))
        sp = []
        if is_att and n_sp:
            k = attacked.index(b)
            sp = [spammers[(k * n_sp + t) % len(spammers)] for t in range(n_sp)]
        # spammers rate honestly only where they are not attacking
        eligible = honest if is_att else honest + spammers
        if not eligible:
            eligible = sp
        m = min(spec.popular_reviewers_per_business, len(eligible))
        chosen = [eligible[i] for i in sorted(prng.choice(len(eligible), size=m, replace=False))] if m else []
        chosen = [u for u in chosen if u not in sp]
        plans.append(_BusinessPlan(b, quality, is_att, chosen, sp))

    truth = GroundTruth(set(popular), set(spammers), set(attacked))
    reviews: list[dict[str, Any]] = []
    for i, plan in enumerate(plans):
        brng = _rng(spec.seed, "business", i)
        rows, spam_ids, days = _layout_business(brng, spec, plan, organic_pool, fakes)
        reviews.extend(rows)
        truth.planted_spam_review_ids.update(spam_ids)
        if days:
            truth.campaign_days[plan.business_id] = days

    by_user: dict[str, list[dict[str, Any]]] = {}
    for r in reviews:
        by_user.setdefault(r["user_id"], []).append(r)

    users = []
    for i, uid in enumerate(ordinary):
        urng = _rng(spec.seed, "user", i)
        mine = by_user.get(uid, [])
        first = min((int(r["date"][:4]) for r in mine), default=None)
        avg = sum(r["stars"] for r in mine) / len(mine) if mine else None
        users.append(_ordinary_user(urng, uid, len(mine), first, avg))
    for i, uid in enumerate(popular):
        urng = _rng(spec.seed, "user", spec.n_ordinary_users + i)
        users.append(_popular_user(urng, uid, len(by_user.get(uid, [])), None))

    businesses = []
    by_biz: dict[str, list[int]] = {}
    for r in reviews:
        by_biz.setdefault(r["business_id"], []).append(r["stars"])
    for b in biz_ids:
        s = by_biz.get(b, [])
        businesses.append(
            {
                "business_id": b,
                "name": f"Business {b[1:]}",
                "stars": round(2 * sum(s) / len(s)) / 2 if s else 0.0,
                "review_count": len(s),
            }
        )
    reviews.sort(key=lambda r: r["review_id"])
    return SyntheticCorpus(users, reviews, businesses, truth)


def spec_to_dict(spec: ScenarioSpec) -> dict[str, Any]:
    d = asdict(spec)
    d["window_start"] = spec.window_start.isoformat()
    d["window_end"] = spec.window_end.isoformat()
    return d
