"""Command-line entry point: ``reviewq <stage> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, pipeline, synthgen
from .config import ConfigError, build_config
from .ingest import IngestError, SnapshotError
from .spamscore import OrientationError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

_DATA_ERRORS = (IngestError, SnapshotError, pipeline.DependencyError, synthgen.ScenarioError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline configuration (flags > config file > defaults)")
    g.add_argument("--config", type=Path, help="key=value config file")
    g.add_argument("--out-dir", "-o", dest="out_dir", help="output directory (env REVIEWQ_OUTPUT_DIR)")
    g.add_argument("--users", help="newline-delimited user records")
    g.add_argument("--reviews", help="newline-delimited review records")
    g.add_argument("--businesses", help="newline-delimited business records")
    g.add_argument("--window-start", dest="window_start", help="first review date analysed (YYYY-MM-DD)")
    g.add_argument("--window-end", dest="window_end", help="last review date analysed (YYYY-MM-DD)")
    g.add_argument("--link-policy", dest="link_policy", choices=("drop", "stub"))
    g.add_argument("--max-error-rate", dest="max_error_rate", type=float)
    g.add_argument("--k-min", dest="k_min", type=int)
    g.add_argument("--k-max", dest="k_max", type=int)
    g.add_argument("--restarts", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--min-reviews", dest="min_reviews", type=int, help="business review-count guard")
    g.add_argument("--min-active-days", dest="min_active_days", type=int)
    g.add_argument("--etf-window", dest="etf_window", type=int)
    g.add_argument("--s-threshold", dest="s_threshold", type=float)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--theta-min", dest="theta_min", type=int)
    g.add_argument("--theta-max", dest="theta_max", type=int)
    g.add_argument("--strict-quarantine", dest="strict_quarantine", action="store_const", const=True)
    g.add_argument("--trust-full-count", dest="trust_full_count", action="store_const", const=True)
    g.add_argument("--orientations", help="feature=H|L table")
    g.add_argument("--max-plots", dest="max_plots", type=int)
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


_CONFIG_KEYS = (
    "out_dir", "users", "reviews", "businesses", "window_start", "window_end", "link_policy",
    "max_error_rate", "k_min", "k_max", "restarts", "seed", "max_iters", "min_reviews",
    "min_active_days", "etf_window", "s_threshold", "tolerance", "theta_min", "theta_max",
    "strict_quarantine", "trust_full_count", "orientations", "max_plots",
)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reviewq", description="Quarantine popular reviewers who post deceptive ratings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _config_flags()
    helps = {
        "run": "run every stage and write manifest.json",
        "ingest": "parse record files into a corpus snapshot",
        "cluster": "k sweep over user features, BIC table, popular cluster",
        "extract": "businesses rated by popular users",
        "rsd": "daily counts, outlier fences and spikes",
        "score": "review and business spam scores",
        "quarantine": "trusted scores and the quarantine threshold sweep",
        "report": "re-render SVG figures from existing CSVs",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)

    synth = sub.add_parser("synth", help="write a synthetic corpus with ground truth",
                           description="write a synthetic corpus with ground truth")
    synth.add_argument("--out-dir", "-o", dest="out_dir", required=True)
    defaults = synthgen.ScenarioSpec()
    for f in ("seed", "n_ordinary_users", "n_popular_users", "n_spammer_popular_users", "n_businesses",
              "n_attacked_businesses", "organic_reviews_min", "organic_reviews_max", "n_fake_accounts",
              "campaign_reviews_per_day", "campaign_duration_days"):
        synth.add_argument("--" + f.replace("_", "-"), dest=f, type=int, default=getattr(defaults, f))
    synth.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _run_synth(args: argparse.Namespace) -> int:
    fields = {k: v for k, v in vars(args).items() if k in synthgen.ScenarioSpec.__dataclass_fields__}
    spec = replace(synthgen.ScenarioSpec(), **fields)
    corpus = synthgen.generate(spec)
    paths = corpus.write(args.out_dir)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _run_synth(args)
        flags = {k: getattr(args, k) for k in _CONFIG_KEYS}
        cfg = build_config(flags, args.config)
        if args.command == "run":
            manifest = pipeline.run_pipeline(cfg)
            print(json.dumps(manifest["counts"], indent=2, sort_keys=True))
        else:
            counts = pipeline.run_stage(args.command, cfg)
            print(json.dumps(counts, indent=2, sort_keys=True))
        return EXIT_OK
    except (ConfigError, OrientationError) as exc:
        print(f"reviewq: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"reviewq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).exception("internal error")
        print(f"reviewq: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
