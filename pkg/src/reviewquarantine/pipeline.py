"""Pipeline stages over an output directory.

Each stage reads what earlier stages wrote (the corpus snapshot and CSVs)
and writes its own files, so running stages one at a time produces exactly
the files of a one-shot :func:`run_pipeline`.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import time
from collections import defaultdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import clustering, features, plotting, quarantine, rsd, spamscore
from .config import PipelineConfig
from .ingest import Corpus, IngestError, load_snapshot, parse_corpus, snapshot
from .reports import atomic_write_text, read_csv, sha256_file, write_csv

logger = logging.getLogger(__name__)

SNAPSHOT = "corpus.snapshot"
INGEST_REPORT = "ingest_report.json"
USER_FEATURES_CSV = "user_features.csv"
BIC_CSV = "bic_table.csv"
CLUSTERS_CSV = "clusters.csv"
ASSIGNMENTS_CSV = "assignments.csv"
POPULAR_CSV = "popular_users.csv"
BUSINESSES_CSV = "businesses.csv"
DAILY_CSV = "daily_counts.csv"
FENCES_CSV = "fences.csv"
SPIKES_CSV = "spikes.csv"
SPIKY_CSV = "spiky_businesses.csv"
REVIEW_FEATURES_CSV = "review_features.csv"
BUSINESS_FEATURES_CSV = "business_features.csv"
SCORES_CSV = "scores.csv"
TRUST_CSV = "trust_scores.csv"
QUARANTINE_CSV = "quarantine.csv"
EVIDENCE_CSV = "evidence.csv"
FIGURES = "figures"
MANIFEST = "manifest.json"
TIMINGS = "timings.json"
FAILED = "FAILED"

# which stage writes each upstream artifact, for dependency errors
_PRODUCER = {
    SNAPSHOT: "ingest",
    POPULAR_CSV: "cluster",
    BIC_CSV: "cluster",
    BUSINESSES_CSV: "extract",
    DAILY_CSV: "rsd",
    FENCES_CSV: "rsd",
    SPIKES_CSV: "rsd",
    SPIKY_CSV: "rsd",
    SCORES_CSV: "score",
    QUARANTINE_CSV: "quarantine",
}


class DependencyError(Exception):
    """A stage was run before the stage that produces its input."""


def _need(cfg: PipelineConfig, name: str, stage: str) -> Path:
    path = Path(cfg.out_dir) / name
    if not path.exists():
        raise DependencyError(
            f"stage '{stage}' needs {name}; run the '{_PRODUCER.get(name, '?')}' stage first"
        )
    return path


def _corpus(cfg: PipelineConfig, stage: str) -> Corpus:
    return load_snapshot(_need(cfg, SNAPSHOT, stage))


def _orientations(cfg: PipelineConfig) -> dict[str, str]:
    if cfg.orientations is None:
        return dict(spamscore.DEFAULT_ORIENTATIONS)
    return spamscore.load_orientations(cfg.orientations)


# --- stages ---------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig) -> dict[str, Any]:
    if cfg.users is None or cfg.reviews is None or cfg.businesses is None:
        raise IngestError("ingest needs --users, --reviews and --businesses")
    corpus, report = parse_corpus(
        cfg.users, cfg.reviews, cfg.businesses, cfg.link_policy,
        window=cfg.window, max_error_rate=cfg.max_error_rate,
    )
    if not corpus.reviews:
        raise IngestError(f"no usable reviews in {cfg.reviews}")
    out = Path(cfg.out_dir)
    snapshot(corpus, out / SNAPSHOT)
    atomic_write_text(out / INGEST_REPORT, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return {"users": len(corpus.users), "reviews": len(corpus.reviews), "businesses": len(corpus.businesses)}


def stage_cluster(cfg: PipelineConfig) -> dict[str, Any]:
    corpus = _corpus(cfg, "cluster")
    out = Path(cfg.out_dir)
    ids = list(corpus.users)
    raw = np.array([features.user_features(corpus.users[u]) for u in ids], dtype=float)
    write_csv(out / USER_FEATURES_CSV, ("user_id", *features.USER_FEATURES),
              ([u, *row] for u, row in zip(ids, raw.tolist())))
    if len(ids) < 2:
        raise IngestError("clustering needs at least 2 users")
    z, params = features.zscore_normalize(raw)
    k_max = min(cfg.k_max, len(ids))
    sweep = clustering.sweep_k(z, min(cfg.k_min, k_max), k_max, cfg.restarts, cfg.seed, cfg.max_iters, ids=ids)
    ref_year = clustering.reference_year(corpus)

    bic_rows = []
    for s in sweep.scores:
        c = sweep.per_k[s.k]
        pidx, members = clustering.select_popular_cluster(c, params, ref_year)
        bic_rows.append([s.k, s.log_likelihood, s.penalty, s.bic, s.variance, s.n_params,
                         c.distortion, s.degenerate, pidx, len(members)])
        _write_cluster_table(out / f"clusters_k{s.k}.csv", c, params)
    write_csv(out / BIC_CSV, ("k", "log_likelihood", "penalty", "bic", "variance", "n_params",
                              "distortion", "degenerate", "popular_cluster", "popular_size"), bic_rows)

    best = sweep.best
    _write_cluster_table(out / CLUSTERS_CSV, best, params)
    write_csv(out / ASSIGNMENTS_CSV, ("user_id", "cluster"), sorted(best.assignments.items()))
    pidx, members = clustering.select_popular_cluster(best, params, ref_year)
    write_csv(out / POPULAR_CSV, ("user_id", "cluster", "k"), ([u, pidx, best.k] for u in sorted(members)))
    return {"best_k": best.k, "popular_cluster": pidx, "popular_users": len(members)}


def _write_cluster_table(path: Path, c: clustering.Clustering, params: features.NormalizationParams) -> None:
    raw = params.denormalize(c.centroids)
    header = ("Features", *(f"Cluster_{j}" for j in range(c.k)))
    rows = [[name, *(round(float(v), 6) + 0.0 for v in raw[:, i])] for i, name in enumerate(features.USER_FEATURES)]
    rows.append(["total_users", *(int(n) for n in c.cluster_sizes)])
    write_csv(path, header, rows)


def stage_extract(cfg: PipelineConfig) -> dict[str, Any]:
    corpus = _corpus(cfg, "extract")
    popular = [r["user_id"] for r in read_csv(_need(cfg, POPULAR_CSV, "extract"))]
    biz = clustering.extract_businesses(popular, corpus, cfg.min_reviews)
    write_csv(Path(cfg.out_dir) / BUSINESSES_CSV, ("business_id", "review_count"),
              ([b, len(corpus.review_index_by_business[b])] for b in biz))
    return {"extracted_businesses": len(biz)}


def _businesses(cfg: PipelineConfig, stage: str) -> list[str]:
    return [r["business_id"] for r in read_csv(_need(cfg, BUSINESSES_CSV, stage))]


def stage_rsd(cfg: PipelineConfig) -> dict[str, Any]:
    corpus = _corpus(cfg, "rsd")
    biz = _businesses(cfg, "rsd")
    an = rsd.spiky_businesses(biz, corpus, cfg.window, cfg.min_active_days)
    out = Path(cfg.out_dir)
    daily = []
    fence_rows = []
    for b, s in an.series.items():
        for pol in rsd.POLARITIES:
            counts = s.counts(pol)
            daily.extend([b, d.isoformat(), pol, c] for d, c in counts.items())
            fp = an.fences.get((b, pol))
            if fp is None:
                fence_rows.append([b, pol, len(counts), "", "", "", "", "", "", "not_enough_data"])
            else:
                fence_rows.append([b, pol, len(counts), fp.q1, fp.q2, fp.q3, fp.iqr, fp.uof, fp.lof, "ok"])
    write_csv(out / DAILY_CSV, ("business_id", "date", "polarity", "count"), daily)
    write_csv(out / FENCES_CSV, ("business_id", "polarity", "active_days", "q1", "q2", "q3", "iqr", "uof", "lof",
                                 "status"), fence_rows)
    write_csv(out / SPIKES_CSV, ("business_id", "date", "polarity", "count", "uof"),
              ([s.business_id, s.date.isoformat(), s.polarity, s.count, s.fence] for s in an.spikes))
    n_spikes: dict[str, int] = defaultdict(int)
    for s in an.spikes:
        n_spikes[s.business_id] += 1
    write_csv(out / SPIKY_CSV, ("business_id", "n_spikes"), ([b, n_spikes[b]] for b in an.spiky))
    return {
        "rsd_businesses": an.n_businesses,
        "spiky_businesses": len(an.spiky),
        "spiky_fraction": an.spiky_fraction,
        "spikes": len(an.spikes),
        "skipped_series": len(an.skipped),
    }


def stage_score(cfg: PipelineConfig) -> dict[str, Any]:
    corpus = _corpus(cfg, "score")
    biz = _businesses(cfg, "score")
    orient = _orientations(cfg)
    out = Path(cfg.out_dir)
    fcols = [f"f_{n}" for n in (*features.REVIEW_FEATURES, *features.BUSINESS_FEATURES)]
    rows = []
    review_rows = []
    n_flagged_reviews = 0
    for b in biz:
        vecs = features.business_review_features(b, corpus, etf_window=cfg.etf_window)
        review_rows.extend([rid, b, *v] for rid, v in vecs.items())
        scores = spamscore.score_reviews(b, corpus, orient, cfg.s_threshold, etf_window=cfg.etf_window)
        for rid, s in scores.items():
            n_flagged_reviews += s.flagged
            rows.append([rid, "review", b, *(_fcell(s, c) for c in fcols), s.score, s.flagged])
    write_csv(out / REVIEW_FEATURES_CSV, ("review_id", "business_id", *features.REVIEW_FEATURES), review_rows)

    bfeat = [[b, *features.business_features(b, corpus)] for b in biz]
    write_csv(out / BUSINESS_FEATURES_CSV, ("business_id", *features.BUSINESS_FEATURES), bfeat)
    n_flagged_biz = 0
    degenerate = False
    if len(biz) >= 2:
        bs = spamscore.score_businesses(biz, corpus, orient, cfg.s_threshold)
        degenerate = bs.degenerate_population
        for b in biz:
            s = bs.scores[b]
            n_flagged_biz += s.flagged
            rows.append([b, "business", b, *(_fcell(s, c) for c in fcols), s.score, s.flagged])
    else:
        logger.warning("fewer than 2 extracted businesses; business spam scores skipped")
    write_csv(out / SCORES_CSV, ("subject_id", "kind", "business_id", *fcols, "S", "flagged"), rows)
    return {
        "scored_reviews": len(review_rows),
        "flagged_reviews": n_flagged_reviews,
        "flagged_businesses": n_flagged_biz,
        "degenerate_business_population": degenerate,
    }


def _fcell(s: spamscore.SpamScore, col: str) -> Any:
    v = s.f_values.get(col[2:])
    return "" if v is None else v


def stage_quarantine(cfg: PipelineConfig) -> dict[str, Any]:
    corpus = _corpus(cfg, "quarantine")
    popular = [r["user_id"] for r in read_csv(_need(cfg, POPULAR_CSV, "quarantine"))]
    spiky = [r["business_id"] for r in read_csv(_need(cfg, SPIKY_CSV, "quarantine"))]
    score_rows = read_csv(_need(cfg, SCORES_CSV, "quarantine"))
    review_scores: dict[str, dict[str, spamscore.SpamScore]] = defaultdict(dict)
    for r in score_rows:
        if r["kind"] == "review":
            review_scores[r["business_id"]][r["subject_id"]] = spamscore.SpamScore(
                r["subject_id"], "review", {}, float(r["S"]), r["flagged"] == "1"
            )
    trust = {}
    for b in spiky:
        if b not in review_scores:
            raise DependencyError(f"scores.csv has no review scores for spiky business {b}; rerun 'score'")
        trust[b] = quarantine.trusted_score(b, review_scores[b], corpus, cfg.s_threshold,
                                            full_count=cfg.trust_full_count)
    out = Path(cfg.out_dir)
    write_csv(out / TRUST_CSV, ("business_id", "t_b", "basis_count", "fallback"),
              ([t.business_id, t.t_b, t.basis_count, t.fallback] for t in trust.values()))
    reports = quarantine.quarantine_sweep(popular, spiky, trust, corpus, cfg.thetas, cfg.tolerance,
                                          strict=cfg.strict_quarantine)
    write_csv(out / QUARANTINE_CSV, ("threshold", "quarantined_count", "percentage", "user_ids"),
              ([r.threshold, len(r.quarantined), r.percentage, ";".join(sorted(r.quarantined))] for r in reports))
    evidence = quarantine.deceptive_evidence(popular, spiky, trust, corpus, cfg.tolerance)
    write_csv(out / EVIDENCE_CSV, ("user_id", "business_id", "review_id", "stars", "t_b", "deviation"),
              ([e.user_id, e.business_id, e.review_id, e.stars, e.t_b, e.deviation] for e in evidence))
    summary = {"trusted_businesses": len(trust), "deceptive_ratings": len(evidence)}
    for r in reports:
        summary[f"quarantined@{r.threshold}"] = len(r.quarantined)
    return summary


def stage_report(cfg: PipelineConfig) -> dict[str, Any]:
    """Render SVG figures from the CSVs already in the output directory."""
    out = Path(cfg.out_dir)
    fig_dir = out / FIGURES
    written = []

    bic_rows = read_csv(_need(cfg, BIC_CSV, "report"))
    finite = [r for r in bic_rows if r["bic"] not in ("-inf", "inf", "nan")]
    if finite:
        best = max(finite, key=lambda r: (float(r["bic"]), -int(r["k"])))
        plotting.bic_curve(fig_dir / "bic.svg", [int(r["k"]) for r in finite],
                           [float(r["bic"]) for r in finite], int(best["k"]))
        written.append("bic.svg")

    qpath = out / QUARANTINE_CSV
    if qpath.exists():
        q = read_csv(qpath)
        plotting.quarantine_sweep(fig_dir / "quarantine_sweep.svg", [int(r["threshold"]) for r in q],
                                  [float(r["percentage"]) for r in q])
        written.append("quarantine_sweep.svg")

    daily: dict[str, dict[str, dict[dt.date, int]]] = defaultdict(lambda: {rsd.POSITIVE: {}, rsd.NEGATIVE: {}})
    for r in read_csv(_need(cfg, DAILY_CSV, "report")):
        daily[r["business_id"]][r["polarity"]][dt.date.fromisoformat(r["date"])] = int(r["count"])
    fences = {(r["business_id"], r["polarity"]): r for r in read_csv(_need(cfg, FENCES_CSV, "report"))}
    spikes: dict[str, list[tuple[dt.date, str]]] = defaultdict(list)
    for r in read_csv(_need(cfg, SPIKES_CSV, "report")):
        spikes[r["business_id"]].append((dt.date.fromisoformat(r["date"]), r["polarity"]))
    spiky = [r["business_id"] for r in read_csv(_need(cfg, SPIKY_CSV, "report"))][: cfg.max_plots]

    def uof(b: str, pol: str) -> float | None:
        f = fences.get((b, pol))
        return float(f["uof"]) if f and f["status"] == "ok" else None

    for b in spiky:
        name = f"timeline_{b}.svg"
        plotting.timeline(fig_dir / name, b, daily[b][rsd.POSITIVE], daily[b][rsd.NEGATIVE],
                          uof(b, rsd.POSITIVE), uof(b, rsd.NEGATIVE), spikes[b])
        written.append(name)

    stats = []
    for b in spiky:
        f = fences.get((b, rsd.POSITIVE))
        if not f or f["status"] != "ok":
            continue
        vals = sorted(daily[b][rsd.POSITIVE].values())
        lo, hi = float(f["lof"]), float(f["uof"])
        inside = [v for v in vals if lo <= v <= hi]
        stats.append({
            "label": b, "q1": float(f["q1"]), "med": float(f["q2"]), "q3": float(f["q3"]),
            "whislo": min(inside), "whishi": max(inside), "fliers": [v for v in vals if v > hi or v < lo],
        })
    plotting.box_whisker(fig_dir / "boxplot_positive.svg", stats)
    written.append("boxplot_positive.svg")
    return {"figures": len(written)}


STAGES: dict[str, Callable[[PipelineConfig], dict[str, Any]]] = {
    "ingest": stage_ingest,
    "cluster": stage_cluster,
    "extract": stage_extract,
    "rsd": stage_rsd,
    "score": stage_score,
    "quarantine": stage_quarantine,
    "report": stage_report,
}


def output_digests(out_dir: Path) -> dict[str, str]:
    skip = {MANIFEST, TIMINGS, FAILED}
    return {
        p.relative_to(out_dir).as_posix(): sha256_file(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name not in skip and not p.name.startswith(".")
    }


def run_stage(name: str, cfg: PipelineConfig) -> dict[str, Any]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger.info("stage %s", name)
    try:
        return STAGES[name](cfg)
    except Exception as exc:
        atomic_write_text(out / FAILED, f"stage: {name}\nerror: {type(exc).__name__}: {exc}\n")
        raise


def run_pipeline(cfg: PipelineConfig) -> dict[str, Any]:
    """Run every stage in order and write ``manifest.json``.

    The manifest holds the config echo, per-stage counts and a SHA-256 of
    every output file; wall-clock timings go to ``timings.json`` so the
    manifest is identical across repeated runs.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / FAILED).unlink(missing_ok=True)
    counts: dict[str, Any] = {}
    timings: dict[str, float] = {}
    for name in STAGES:
        t0 = time.perf_counter()
        counts[name] = run_stage(name, cfg)
        timings[name] = round(time.perf_counter() - t0, 4)
    manifest = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "counts": counts,
        "outputs": output_digests(out),
    }
    atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    atomic_write_text(out / TIMINGS, json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return manifest
