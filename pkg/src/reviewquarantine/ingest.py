"""Parsing, validation and cross-linking of user/review/business record files.

Input files are newline-delimited JSON objects using the field names of the
public Yelp academic dataset. Only the fields needed for feature extraction
are required; everything else on a line is ignored.
"""

from __future__ import annotations

import datetime as dt
import gzip
import json
import logging
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (dt.date(2004, 1, 1), dt.date(2016, 12, 31))

SNAPSHOT_FORMAT = "reviewquarantine-corpus"
SNAPSHOT_VERSION = 1


class IngestError(Exception):
    """Raised when an input file cannot be turned into a valid corpus."""


class SnapshotError(Exception):
    """Raised for unreadable, truncated or wrong-version snapshot files."""


class LinkRepairPolicy(str, Enum):
    DROP = "drop"
    STUB = "stub"


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    yelping_since: int
    average_stars: float
    elite_years: tuple[int, ...]
    fan_count: int
    friend_count: int
    review_count: int
    vote_counts: Mapping[str, int]
    compliment_counts: Mapping[str, int]

    @property
    def elite_count(self) -> int:
        return len(self.elite_years)

    @property
    def total_votes(self) -> int:
        return sum(self.vote_counts.values())

    @property
    def total_compliments(self) -> int:
        return sum(self.compliment_counts.values())


@dataclass(frozen=True)
class ReviewRecord:
    review_id: str
    user_id: str
    business_id: str
    stars: int
    date: dt.date
    text: str


@dataclass(frozen=True)
class BusinessRecord:
    business_id: str
    name: str
    stars: float
    review_count: int


@dataclass
class IngestReport:
    """Per-file line accounting for one parse.

    For every file, ``parsed + dropped == lines`` where blank lines are not
    counted as lines.
    """

    lines: dict[str, int] = field(default_factory=lambda: {"users": 0, "reviews": 0, "businesses": 0})
    parsed: dict[str, int] = field(default_factory=lambda: {"users": 0, "reviews": 0, "businesses": 0})
    dropped: dict[str, dict[str, int]] = field(
        default_factory=lambda: {"users": {}, "reviews": {}, "businesses": {}}
    )
    errors: list[str] = field(default_factory=list)
    stubbed: dict[str, int] = field(default_factory=lambda: {"users": 0, "businesses": 0})

    def drop(self, kind: str, reason: str) -> None:
        self.dropped[kind][reason] = self.dropped[kind].get(reason, 0) + 1

    def dropped_total(self, kind: str) -> int:
        return sum(self.dropped[kind].values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "lines": dict(self.lines),
            "parsed": dict(self.parsed),
            "dropped": {k: dict(sorted(v.items())) for k, v in self.dropped.items()},
            "stubbed": dict(self.stubbed),
            "errors": list(self.errors[:100]),
            "error_count": len(self.errors),
        }


class Corpus:
    """Immutable, cross-linked collection of users, reviews and businesses.

    Records are stored in canonical (sorted-by-key) order. The per-user and
    per-business review indexes hold review ids sorted by ``(date, review_id)``.
    """

    __slots__ = ("users", "reviews", "businesses", "review_index_by_user", "review_index_by_business")

    def __init__(
        self,
        users: Iterable[UserRecord] = (),
        reviews: Iterable[ReviewRecord] = (),
        businesses: Iterable[BusinessRecord] = (),
    ) -> None:
        u = {r.user_id: r for r in sorted(users, key=lambda r: r.user_id)}
        rv = {r.review_id: r for r in sorted(reviews, key=lambda r: r.review_id)}
        b = {r.business_id: r for r in sorted(businesses, key=lambda r: r.business_id)}
        by_user: dict[str, list[ReviewRecord]] = defaultdict(list)
        by_biz: dict[str, list[ReviewRecord]] = defaultdict(list)
        for r in rv.values():
            if r.user_id not in u:
                raise IngestError(f"review {r.review_id} references unknown user {r.user_id}")
            if r.business_id not in b:
                raise IngestError(f"review {r.review_id} references unknown business {r.business_id}")
            by_user[r.user_id].append(r)
            by_biz[r.business_id].append(r)

        def _index(groups: dict[str, list[ReviewRecord]]) -> Mapping[str, tuple[str, ...]]:
            return MappingProxyType(
                {
                    key: tuple(r.review_id for r in sorted(groups[key], key=lambda r: (r.date, r.review_id)))
                    for key in sorted(groups)
                }
            )

        object.__setattr__(self, "users", MappingProxyType(u))
        object.__setattr__(self, "reviews", MappingProxyType(rv))
        object.__setattr__(self, "businesses", MappingProxyType(b))
        object.__setattr__(self, "review_index_by_user", _index(by_user))
        object.__setattr__(self, "review_index_by_business", _index(by_biz))

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("Corpus is immutable")

    def reviews_of_user(self, user_id: str) -> list[ReviewRecord]:
        return [self.reviews[rid] for rid in self.review_index_by_user.get(user_id, ())]

    def reviews_of_business(self, business_id: str) -> list[ReviewRecord]:
        return [self.reviews[rid] for rid in self.review_index_by_business.get(business_id, ())]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            list(self.users.items()) == list(other.users.items())
            and list(self.reviews.items()) == list(other.reviews.items())
            and list(self.businesses.items()) == list(other.businesses.items())
        )

    def __repr__(self) -> str:
        return f"Corpus(users={len(self.users)}, reviews={len(self.reviews)}, businesses={len(self.businesses)})"


# --- field coercion -------------------------------------------------------


def _parse_date(value: Any) -> dt.date:
    if not isinstance(value, str):
        raise ValueError(f"date must be a string, got {value!r}")
    # time-of-day is discarded
    return dt.date.fromisoformat(value.strip()[:10])


def _parse_year(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("yelping_since must be a year or date")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        return int(value.strip()[:4])
    raise ValueError(f"bad yelping_since {value!r}")


def _nonneg_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return int(value)


def _year_list(value: Any) -> tuple[int, ...]:
    if value is None or value == "" or value == "None":
        return ()
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    years = sorted({int(str(v).strip()[:4]) for v in value})
    return tuple(years)


def _count_or_list(value: Any, name: str) -> int:
    if value is None or value == "None" or value == "":
        return 0
    if isinstance(value, list):
        return len(value)
    if isinstance(value, str):
        return len([v for v in value.split(",") if v.strip()])
    return _nonneg_int(value, name)


def _count_map(raw: Mapping[str, Any], name: str) -> dict[str, int]:
    return {str(k): _nonneg_int(v, f"{name}.{k}") for k, v in sorted(raw.items())}


def user_from_dict(obj: Mapping[str, Any]) -> UserRecord:
    user_id = obj["user_id"]
    if not isinstance(user_id, str) or not user_id:
        raise ValueError("user_id must be a nonempty string")
    review_count = _nonneg_int(obj["review_count"], "review_count")
    avg = float(obj["average_stars"])
    if review_count > 0 and not 1.0 <= avg <= 5.0:
        raise ValueError(f"average_stars {avg} outside [1, 5]")
    if "votes" in obj:
        votes = _count_map(obj["votes"], "votes")
    else:
        votes = _count_map({k: obj.get(k, 0) for k in ("cool", "funny", "useful")}, "votes")
    if "compliments" in obj:
        compliments = _count_map(obj["compliments"], "compliments")
    else:
        compliments = _count_map(
            {k[len("compliment_"):]: v for k, v in obj.items() if k.startswith("compliment_")}, "compliments"
        )
    friends = obj["friend_count"] if "friend_count" in obj else obj.get("friends")
    return UserRecord(
        user_id=user_id,
        yelping_since=_parse_year(obj["yelping_since"]),
        average_stars=avg,
        elite_years=_year_list(obj.get("elite")),
        fan_count=_nonneg_int(obj.get("fans", 0), "fans"),
        friend_count=_count_or_list(friends, "friends"),
        review_count=review_count,
        vote_counts=MappingProxyType(votes),
        compliment_counts=MappingProxyType(compliments),
    )


def review_from_dict(obj: Mapping[str, Any]) -> ReviewRecord:
    for key in ("review_id", "user_id", "business_id"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise ValueError(f"{key} must be a nonempty string")
    stars = obj["stars"]
    if isinstance(stars, bool) or not isinstance(stars, (int, float)) or stars != int(stars):
        raise ValueError(f"stars must be an integer, got {stars!r}")
    if not 1 <= int(stars) <= 5:
        raise ValueError(f"stars {stars} outside 1..5")
    text = obj.get("text", "")
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    return ReviewRecord(
        review_id=obj["review_id"],
        user_id=obj["user_id"],
        business_id=obj["business_id"],
        stars=int(stars),
        date=_parse_date(obj["date"]),
        text=text,
    )


def business_from_dict(obj: Mapping[str, Any]) -> BusinessRecord:
    business_id = obj["business_id"]
    if not isinstance(business_id, str) or not business_id:
        raise ValueError("business_id must be a nonempty string")
    stars = float(obj.get("stars", 0.0) or 0.0)
    review_count = _nonneg_int(obj.get("review_count", 0), "review_count")
    if review_count > 0 and not 1.0 <= stars <= 5.0:
        raise ValueError(f"business stars {stars} outside [1, 5]")
    return BusinessRecord(
        business_id=business_id,
        name=str(obj.get("name", "")),
        stars=stars,
        review_count=review_count,
    )


def user_to_dict(u: UserRecord) -> dict[str, Any]:
    return {
        "user_id": u.user_id,
        "yelping_since": u.yelping_since,
        "average_stars": u.average_stars,
        "elite": list(u.elite_years),
        "fans": u.fan_count,
        "friend_count": u.friend_count,
        "review_count": u.review_count,
        "votes": dict(u.vote_counts),
        "compliments": dict(u.compliment_counts),
    }


def review_to_dict(r: ReviewRecord) -> dict[str, Any]:
    return {
        "review_id": r.review_id,
        "user_id": r.user_id,
        "business_id": r.business_id,
        "stars": r.stars,
        "date": r.date.isoformat(),
        "text": r.text,
    }


def business_to_dict(b: BusinessRecord) -> dict[str, Any]:
    return {"business_id": b.business_id, "name": b.name, "stars": b.stars, "review_count": b.review_count}


# --- parsing --------------------------------------------------------------


def _read_lines(path: Path | str, kind: str, parser, key: str, report: IngestReport) -> dict[str, Any]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {kind} file {path}: {exc}") from exc
    records: dict[str, Any] = {}
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            report.lines[kind] += 1
            try:
                rec = parser(json.loads(line))
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                report.errors.append(f"{kind}:{lineno}: {type(exc).__name__}: {exc}")
                report.drop(kind, "invalid")
                continue
            rid = getattr(rec, key)
            if rid in records:
                report.errors.append(f"{kind}:{lineno}: duplicate {key} {rid}")
                report.drop(kind, "duplicate")
                continue
            records[rid] = rec
    return records


def parse_corpus(
    user_path: Path | str,
    review_path: Path | str,
    business_path: Path | str,
    policy: LinkRepairPolicy | str = LinkRepairPolicy.DROP,
    *,
    window: tuple[dt.date, dt.date] = DEFAULT_WINDOW,
    max_error_rate: float = 0.01,
) -> tuple[Corpus, IngestReport]:
    """Parse the three record files into a :class:`Corpus`.

    Lines that fail to parse or validate are excluded and logged in the
    returned report. If the fraction of such lines in any file exceeds
    ``max_error_rate`` the whole parse is aborted with :class:`IngestError`.
    Reviews dated outside ``window`` are dropped (reason ``out_of_window``).
    Dangling user/business references are dropped or stubbed per ``policy``.
    """
    policy = LinkRepairPolicy(policy)
    report = IngestReport()
    users = _read_lines(user_path, "users", user_from_dict, "user_id", report)
    reviews = _read_lines(review_path, "reviews", review_from_dict, "review_id", report)
    businesses = _read_lines(business_path, "businesses", business_from_dict, "business_id", report)

    for kind in ("users", "reviews", "businesses"):
        n = report.lines[kind]
        bad = report.dropped[kind].get("invalid", 0) + report.dropped[kind].get("duplicate", 0)
        if n and bad / n > max_error_rate:
            raise IngestError(
                f"{kind}: {bad} of {n} lines invalid ({bad / n:.1%} > {max_error_rate:.1%}); "
                f"first error: {report.errors[0] if report.errors else '?'}"
            )

    start, end = window
    kept: list[ReviewRecord] = []
    for r in reviews.values():
        if not start <= r.date <= end:
            report.drop("reviews", "out_of_window")
            continue
        if r.user_id not in users or r.business_id not in businesses:
            if policy is LinkRepairPolicy.DROP:
                report.drop("reviews", "dangling")
                continue
            if r.user_id not in users:
                users[r.user_id] = UserRecord(
                    r.user_id, r.date.year, float(r.stars), (), 0, 0, 0, MappingProxyType({}), MappingProxyType({})
                )
                report.stubbed["users"] += 1
            if r.business_id not in businesses:
                businesses[r.business_id] = BusinessRecord(r.business_id, "", 0.0, 0)
                report.stubbed["businesses"] += 1
        kept.append(r)

    report.parsed["users"] = report.lines["users"] - report.dropped_total("users")
    report.parsed["businesses"] = report.lines["businesses"] - report.dropped_total("businesses")
    report.parsed["reviews"] = len(kept)
    if report.dropped_total("reviews"):
        logger.info("dropped reviews: %s", report.dropped["reviews"])
    return Corpus(users.values(), kept, businesses.values()), report


# --- snapshot -------------------------------------------------------------

_USER_COLS = (
    "user_id", "yelping_since", "average_stars", "elite", "fans", "friend_count",
    "review_count", "votes", "compliments",
)
_REVIEW_COLS = ("review_id", "user_id", "business_id", "stars", "date", "text")
_BUSINESS_COLS = ("business_id", "name", "stars", "review_count")


def _columns(rows: list[dict[str, Any]], cols: tuple[str, ...]) -> dict[str, list[Any]]:
    return {c: [row[c] for row in rows] for c in cols}


def _rows(table: Mapping[str, list[Any]], cols: tuple[str, ...]) -> list[dict[str, Any]]:
    if set(table) != set(cols):
        raise SnapshotError(f"snapshot columns {sorted(table)} != expected {sorted(cols)}")
    n = {len(v) for v in table.values()}
    if len(n) > 1:
        raise SnapshotError("snapshot columns have unequal lengths")
    return [dict(zip(cols, vals)) for vals in zip(*(table[c] for c in cols))]


def snapshot_bytes(corpus: Corpus) -> bytes:
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "users": _columns([user_to_dict(u) for u in corpus.users.values()], _USER_COLS),
        "reviews": _columns([review_to_dict(r) for r in corpus.reviews.values()], _REVIEW_COLS),
        "businesses": _columns([business_to_dict(b) for b in corpus.businesses.values()], _BUSINESS_COLS),
    }
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return gzip.compress(raw, compresslevel=6, mtime=0)


def snapshot(corpus: Corpus, path: Path | str) -> None:
    """Write a versioned, gzip-compressed columnar snapshot of ``corpus``."""
    from .reports import atomic_write_bytes

    atomic_write_bytes(Path(path), snapshot_bytes(corpus))


def load_snapshot(path: Path | str) -> Corpus:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    try:
        payload = json.loads(gzip.decompress(data).decode("utf-8"))
    except (OSError, EOFError, zlib.error, UnicodeDecodeError, ValueError) as exc:
        raise SnapshotError(f"corrupt or truncated snapshot {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"{path} is not a corpus snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(
            f"snapshot format version {payload.get('version')} unsupported (expected {SNAPSHOT_VERSION})"
        )
    try:
        users = [user_from_dict(d) for d in _rows(payload["users"], _USER_COLS)]
        reviews = [review_from_dict(d) for d in _rows(payload["reviews"], _REVIEW_COLS)]
        businesses = [business_from_dict(d) for d in _rows(payload["businesses"], _BUSINESS_COLS)]
        return Corpus(users, reviews, businesses)
    except (KeyError, ValueError, TypeError, IngestError) as exc:
        raise SnapshotError(f"invalid snapshot content in {path}: {exc}") from exc


def write_ndjson(path: Path | str, rows: Iterable[Mapping[str, Any]]) -> None:
    from .reports import atomic_write_bytes

    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)
    atomic_write_bytes(Path(path), text.encode("utf-8"))
