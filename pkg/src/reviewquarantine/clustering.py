"""k-means over user features, BIC model selection and business extraction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import USER_FEATURES, NormalizationParams
from .ingest import Corpus

logger = logging.getLogger(__name__)

# centroid coordinates where larger means more engaged; yelping_since is flipped to tenure
_YELPING_SINCE = USER_FEATURES.index("yelping_since")
_FANS = USER_FEATURES.index("fans")


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray  # (k, d), in the space the vectors were given in
    labels: np.ndarray  # (R,) cluster index per input row
    cluster_sizes: np.ndarray  # (k,)
    distortion: float
    iterations: int
    converged: bool
    seed: int
    history: list[float] = field(default_factory=list)  # distortion after each assignment step
    ids: tuple[str, ...] | None = None

    @property
    def assignments(self) -> dict[str, int]:
        if self.ids is None:
            raise ValueError("clustering was built without row ids")
        return {uid: int(c) for uid, c in zip(self.ids, self.labels)}

    def members(self, index: int) -> list[str]:
        if self.ids is None:
            raise ValueError("clustering was built without row ids")
        return [uid for uid, c in zip(self.ids, self.labels) if c == index]


@dataclass(frozen=True)
class BicScore:
    k: int
    log_likelihood: float
    penalty: float
    bic: float
    variance: float
    n_params: int
    degenerate: bool = False


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # (R, k) squared Euclidean distances
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((x - x[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with chosen centers
            rest = [i for i in range(n) if i not in centers]
            centers.append(int(rng.choice(rest)))
        else:
            centers.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((x - x[centers[-1]]) ** 2).sum(axis=1))
    return x[centers].copy()


def kmeans(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    ids: Sequence[str] | None = None,
) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding.

    Rows are sorted lexicographically before seeding so the result does not
    depend on input order. Empty clusters are reseeded at the point farthest
    from its own centroid.
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2:
        raise ValueError("vectors must be a 2-D array")
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds number of vectors {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors must be finite")

    order = np.lexsort(x.T[::-1])
    xs = x[order]
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(xs, k, rng)

    labels = np.full(n, -1)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(xs, centroids)
        new_labels = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                centroids[j] = xs[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = ((xs - centroids[labels]) ** 2).sum(axis=1)
            taken: set[int] = set()
            for j in empty:
                for i in np.argsort(-own, kind="stable"):
                    if int(i) not in taken and counts[labels[i]] > 1:
                        taken.add(int(i))
                        counts[labels[i]] -= 1
                        counts[j] += 1
                        centroids[j] = xs[i]
                        break
            logger.debug("reseeded %d empty clusters", empty.size)

    sizes = np.bincount(labels, minlength=k)
    distortion = float(((xs - centroids[labels]) ** 2).sum())
    out_labels = np.empty(n, dtype=int)
    out_labels[order] = labels
    return Clustering(
        k=k,
        centroids=centroids,
        labels=out_labels,
        cluster_sizes=sizes,
        distortion=distortion,
        iterations=it,
        converged=converged,
        seed=seed,
        history=history,
        ids=tuple(ids) if ids is not None else None,
    )


def n_parameters(k: int, d: int) -> int:
    # mixture weights + centroid coordinates + one shared variance
    return (k - 1) + k * d + 1


def bic(clustering: Clustering, vectors) -> BicScore:
    """Spherical-Gaussian BIC; higher is better.

    ``log_likelihood`` sums, over non-empty clusters,
    ``-R_i/2 log(2 pi) - R_i d/2 log(var) - (R_i - 1)/2 + R_i log(R_i / R)``
    with ``var`` the pooled within-cluster variance ``distortion / (R - k)``.
    """
    x = np.asarray(vectors, dtype=float)
    r, d = x.shape
    k = clustering.k
    p = n_parameters(k, d)
    penalty = p / 2 * math.log(r) if r > 0 else 0.0
    if r <= k:
        return BicScore(k, -math.inf, penalty, -math.inf, 0.0, p, degenerate=True)
    sq = float(((x - clustering.centroids[clustering.labels]) ** 2).sum())
    var = sq / (r - k)
    if var <= 0:
        return BicScore(k, -math.inf, penalty, -math.inf, 0.0, p, degenerate=True)
    ll = 0.0
    for ri in clustering.cluster_sizes:
        ri = int(ri)
        if ri == 0:
            continue
        ll += (
            -ri / 2 * math.log(2 * math.pi)
            - ri * d / 2 * math.log(var)
            - (ri - 1) / 2
            + ri * math.log(ri / r)
        )
    return BicScore(k, ll, penalty, ll - penalty, var, p)


@dataclass
class SweepResult:
    best: Clustering
    best_score: BicScore
    scores: list[BicScore]
    per_k: dict[int, Clustering]


def sweep_k(
    vectors,
    k_min: int,
    k_max: int,
    restarts: int = 5,
    seed: int = 0,
    max_iters: int = 100,
    ids: Sequence[str] | None = None,
) -> SweepResult:
    """Run k-means for every k in ``[k_min, k_max]`` and keep the best BIC.

    Within one k the restart with the highest BIC wins (ties: lower distortion,
    then earlier restart). Restart ``j`` at ``k`` uses seed ``seed + 1000*k + j``.
    """
    x = np.asarray(vectors, dtype=float)
    if not 1 <= k_min <= k_max <= x.shape[0]:
        raise ValueError(f"need 1 <= k_min <= k_max <= {x.shape[0]}, got {k_min}..{k_max}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    scores: list[BicScore] = []
    per_k: dict[int, Clustering] = {}
    for k in range(k_min, k_max + 1):
        best_c, best_s = None, None
        for j in range(restarts):
            c = kmeans(x, k, seed=seed + 1000 * k + j, max_iters=max_iters, ids=ids)
            s = bic(c, x)
            if best_s is None or (s.bic, -c.distortion) > (best_s.bic, -best_c.distortion):
                best_c, best_s = c, s
        per_k[k] = best_c
        scores.append(best_s)
    top = max(scores, key=lambda s: (s.bic, -s.k))
    return SweepResult(best=per_k[top.k], best_score=top, scores=scores, per_k=per_k)


def popularity_scores(raw_centroids: np.ndarray, reference_year: float) -> np.ndarray:
    """Mean of engagement-oriented centroid coordinates (tenure replaces join year)."""
    c = np.array(raw_centroids, dtype=float, copy=True)
    c[:, _YELPING_SINCE] = reference_year - c[:, _YELPING_SINCE]
    return c.mean(axis=1)


def select_popular_cluster(
    clustering: Clustering, params: NormalizationParams | None, reference_year: float
) -> tuple[int, list[str]]:
    """Pick the cluster whose de-normalized centroid is most engaged.

    Ties go to the larger fan centroid, then the lower index. Empty clusters
    are never selected. ``params=None`` means centroids are already raw.
    """
    raw = clustering.centroids if params is None else params.denormalize(clustering.centroids)
    scores = popularity_scores(raw, reference_year)
    candidates = [j for j in range(clustering.k) if clustering.cluster_sizes[j] > 0]
    best = max(candidates, key=lambda j: (scores[j], raw[j, _FANS], -j))
    members = clustering.members(best) if clustering.ids is not None else []
    return best, members


def extract_businesses(popular: Iterable[str], corpus: Corpus, min_reviews: int = 10) -> list[str]:
    """Distinct businesses rated by any popular user that have >= ``min_reviews`` reviews."""
    found: set[str] = set()
    for uid in popular:
        for rid in corpus.review_index_by_user.get(uid, ()):
            b = corpus.reviews[rid].business_id
            if b not in found and len(corpus.review_index_by_business[b]) >= min_reviews:
                found.add(b)
    return sorted(found)


def reference_year(corpus: Corpus) -> int:
    return max((r.date.year for r in corpus.reviews.values()), default=0)
