"""SVG figures for the report stage.

Every figure is rendered from the stage CSVs, never from in-memory results,
so ``report`` can be rerun on an existing output directory. SVG output is
made byte-stable by pinning the hash salt and dropping the date metadata.
"""

from __future__ import annotations

import datetime as dt
import io
from contextlib import contextmanager
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .reports import atomic_write_bytes  # noqa: E402

STYLE = {
    "svg.hashsalt": "reviewquarantine",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "figure.dpi": 100,
}

POS_COLOR = "#3b7dd8"
NEG_COLOR = "#d8843b"
SPIKE_COLOR = "#c0392b"


@contextmanager
def _figure(width: float = 7.0, height: float = 3.2):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
        try:
            yield fig, ax
        finally:
            plt.close(fig)


def save_svg(fig, path: Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    atomic_write_bytes(path, buf.getvalue())


def timeline(
    path: Path,
    business_id: str,
    positive: Mapping[dt.date, int],
    negative: Mapping[dt.date, int],
    uof_pos: float | None,
    uof_neg: float | None,
    spike_days: Sequence[tuple[dt.date, str]],
) -> None:
    """Daily positive counts up, negative counts down, fences as lines, spikes in red."""
    spikes = set(spike_days)
    with _figure() as (fig, ax):
        if positive:
            days = list(positive)
            colors = [SPIKE_COLOR if (d, "positive") in spikes else POS_COLOR for d in days]
            ax.bar(days, list(positive.values()), width=3, color=colors, label="positive / day")
        if negative:
            days = list(negative)
            colors = [SPIKE_COLOR if (d, "negative") in spikes else NEG_COLOR for d in days]
            ax.bar(days, [-c for c in negative.values()], width=3, color=colors, label="negative / day")
        if uof_pos is not None:
            ax.axhline(uof_pos, color=POS_COLOR, ls="--", lw=0.8, label=f"UOF+ = {uof_pos:g}")
        if uof_neg is not None:
            ax.axhline(-uof_neg, color=NEG_COLOR, ls="--", lw=0.8, label=f"UOF- = {uof_neg:g}")
        ax.axhline(0, color="black", lw=0.5)
        ax.set_title(f"Review spikes: {business_id}")
        ax.set_ylabel("reviews per day")
        ax.legend(loc="upper left")
        save_svg(fig, path)


def box_whisker(path: Path, stats: Sequence[dict], title: str = "Positive reviews per active day") -> None:
    """Box plots from precomputed Tukey hinges.

    Each entry needs ``label, q1, med, q3, whislo, whishi, fliers`` (the keys
    :meth:`matplotlib.axes.Axes.bxp` takes).
    """
    with _figure(width=max(4.0, 0.45 * len(stats) + 1.5), height=3.4) as (fig, ax):
        if stats:
            ax.bxp(list(stats), showfliers=True, flierprops={"markeredgecolor": SPIKE_COLOR})
            ax.tick_params(axis="x", labelrotation=90)
        ax.set_title(title)
        ax.set_ylabel("reviews per day")
        save_svg(fig, path)


def bic_curve(path: Path, ks: Sequence[int], bics: Sequence[float], best_k: int | None) -> None:
    with _figure(width=4.5, height=3.0) as (fig, ax):
        ax.plot(ks, bics, marker="o", color=POS_COLOR)
        if best_k is not None and best_k in ks:
            ax.plot([best_k], [bics[list(ks).index(best_k)]], marker="*", ms=12, color=SPIKE_COLOR, ls="none",
                    label=f"best k = {best_k}")
            ax.legend()
        ax.set_xlabel("k")
        ax.set_ylabel("BIC")
        ax.set_title("BIC over the k sweep")
        save_svg(fig, path)


def quarantine_sweep(path: Path, thresholds: Sequence[int], percentages: Sequence[float]) -> None:
    with _figure(width=4.5, height=3.0) as (fig, ax):
        ax.step(thresholds, [100 * p for p in percentages], where="mid", color=SPIKE_COLOR)
        ax.plot(thresholds, [100 * p for p in percentages], "o", color=SPIKE_COLOR)
        ax.set_xlabel("deceptive-rating threshold")
        ax.set_ylabel("quarantined popular users (%)")
        ax.set_ylim(0, 105)
        ax.set_title("Quarantine threshold sweep")
        save_svg(fig, path)
