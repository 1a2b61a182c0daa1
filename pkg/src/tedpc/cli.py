"""Command-line entry point wiring the pipeline together.

Subcommands: phenotype, infer, timeline, stats, simulate, evaluate.
Exit codes: 0 success, 2 missing/invalid input file, 3 configuration
violation, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

from .analytics import StrataSpec
from .concept_registry import Domain, load_vocabulary, phenotype_search
from .config import RunConfig, build_config, resolve_input_path
from .episode_builder import read_episodes
from .errors import ConfigError, DataFormatError, GenerationError, InvariantError
from .evaluation import Weighting, cohen_kappa, read_matrix_csv, round_trip_score
from .pipeline import run_infer, run_stats, run_timeline
from .synthgen import NoiseSpec, SynthConfig, generate_cohort, read_truth

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3
EXIT_INVARIANT = 4

DEFAULT_KEYWORDS = "trimester,gestation,pregnan"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override it")
    parser.add_argument("--print-config", action="store_true", help="print the effective config and exit")


def _common_overrides(args: argparse.Namespace) -> dict:
    keys = (
        "persons_path",
        "events_path",
        "ga_concepts_path",
        "dod_concepts_path",
        "index_events_path",
        "episodes_path",
        "out_dir",
        "window_days",
        "match_min_days",
        "match_max_days",
        "pandemic_cutoff",
        "threads",
        "seed",
        "emit_cohorts",
        "apply_filters",
    )
    return {key: getattr(args, key) for key in keys if hasattr(args, key)}


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    config = build_config(getattr(args, "config", None), _common_overrides(args))
    if getattr(args, "print_config", False):
        print(config.to_json())
        raise SystemExit(EXIT_OK)
    return config


def _cmd_phenotype(args: argparse.Namespace) -> None:
    vocabulary = load_vocabulary(resolve_input_path(args.vocabulary))
    keywords = [k.strip() for k in args.keywords.split(",") if k.strip()]
    domains = None
    if args.domains:
        domains = {Domain.parse(d) for d in args.domains.split(",") if d.strip()}
    matches = phenotype_search(
        vocabulary,
        keywords,
        domains=domains,
        standard_only=not args.include_non_standard,
        valid_only=not args.include_invalid,
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["concept_id", "name", "domain", "standard", "valid"])
    for entry in matches:
        writer.writerow(
            [entry.concept_id, entry.name, entry.domain.value, str(entry.standard).lower(), str(entry.valid).lower()]
        )
    if args.out:
        Path(args.out).write_text(buffer.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buffer.getvalue())


def _cmd_infer(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    for name in ("persons_path", "events_path"):
        if getattr(config, name) is None:
            raise ConfigError(f"{name.replace('_path', '')} file is required for infer")
    summary = run_infer(config)
    print(f"episodes={summary['episodes']} unmatched_starts={summary['unmatched_starts']} unmatched_dods={summary['unmatched_dods']}")


def _cmd_timeline(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    for name in ("episodes_path", "events_path", "index_events_path"):
        if getattr(config, name) is None:
            raise ConfigError(f"{name.replace('_path', '')} file is required for timeline")
    rows = run_timeline(config)
    print(f"timing_rows={rows}")


def _cmd_stats(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    for name in ("episodes_path", "persons_path", "events_path", "index_events_path"):
        if getattr(config, name) is None:
            raise ConfigError(f"{name.replace('_path', '')} file is required for stats")
    condition_sets: dict[str, Path] = {}
    for item in args.condition or []:
        name, _, raw_path = item.partition("=")
        if not name or not raw_path:
            raise ConfigError(f"--condition expects name=path, got {item!r}")
        condition_sets[name] = resolve_input_path(raw_path)
    strata = None
    if args.strata:
        strata = StrataSpec.from_json(resolve_input_path(args.strata))
    run_stats(config, condition_sets, strata=strata, unsuppressed=args.unsuppressed)
    print(f"report written to {config.out_dir}")


def _cmd_simulate(args: argparse.Namespace) -> None:
    from .concept_registry import load_dod_concepts, load_ga_concepts

    noise = NoiseSpec(
        drop_ga_rate=args.drop_ga,
        conflict_ga_rate=args.conflict_ga,
        shift_rate=args.shift,
        shift_max_days=args.shift_max_days,
        drop_dod_rate=args.drop_dod,
        pre_pregnancy_index_rate=args.pre_index,
    )
    config = SynthConfig(seed=args.seed, n_persons=args.n_persons, index_event_rate=args.index_rate, noise=noise)
    ga_path = resolve_input_path(args.ga_concepts_path) if args.ga_concepts_path else None
    dod_path = resolve_input_path(args.dod_concepts_path) if args.dod_concepts_path else None
    ga_registry = load_ga_concepts(ga_path) if ga_path else load_ga_concepts(RunConfig().ga_concepts_path)
    dod_registry = load_dod_concepts(dod_path) if dod_path else load_dod_concepts(RunConfig().dod_concepts_path)
    cohort = generate_cohort(config, ga_registry, dod_registry)
    paths = cohort.write(args.out_dir)
    print(
        f"persons={len(cohort.persons)} events={len(cohort.events)} "
        f"gestations={len(cohort.truth)} out={paths['events'].parent}"
    )


def _cmd_evaluate(args: argparse.Namespace) -> None:
    if args.matrix:
        matrix = read_matrix_csv(resolve_input_path(args.matrix))
        result = cohen_kappa(matrix, Weighting(args.weighting))
        note = " degenerate=true" if result.degenerate else ""
        print(
            f"weighting={result.weighting.value} observed={result.observed_agreement:.4f} "
            f"expected={result.expected_agreement:.4f} kappa={result.kappa:.4f}{note}"
        )
        return
    if args.truth and args.episodes:
        report = round_trip_score(
            read_truth(resolve_input_path(args.truth)),
            read_episodes(resolve_input_path(args.episodes)),
        )
        for line in report.lines():
            print(line)
        return
    raise ConfigError("evaluate needs either --matrix or both --truth and --episodes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tedpc",
        description="Infer pregnancy episodes from normalized clinical-event tables",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phenotype", help="keyword search over a vocabulary file")
    p.add_argument("--vocabulary", required=True, type=Path)
    p.add_argument("--keywords", default=DEFAULT_KEYWORDS, help="comma-separated keyword stems")
    p.add_argument("--domains", default=None, help="comma-separated domain filter")
    p.add_argument("--include-non-standard", action="store_true")
    p.add_argument("--include-invalid", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_phenotype)

    p = sub.add_parser("infer", help="run the full inference pipeline")
    p.add_argument("--persons", dest="persons_path", type=Path)
    p.add_argument("--events", dest="events_path", type=Path)
    p.add_argument("--ga-concepts", dest="ga_concepts_path", type=Path)
    p.add_argument("--dod-concepts", dest="dod_concepts_path", type=Path)
    p.add_argument("--out", dest="out_dir", type=Path)
    p.add_argument("--window-days", dest="window_days", type=int)
    p.add_argument("--match-min", dest="match_min_days", type=int)
    p.add_argument("--match-max", dest="match_max_days", type=int)
    p.add_argument("--threads", dest="threads", type=int)
    p.add_argument("--emit-cohorts", dest="emit_cohorts", action="store_const", const=True, default=None)
    p.add_argument(
        "--no-cohort-filters",
        dest="apply_filters",
        action="store_const",
        const=False,
        default=None,
        help="skip the delivery-window and maternal-age filters",
    )
    _add_config_flags(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("timeline", help="map index events to gestational weeks")
    p.add_argument("--episodes", dest="episodes_path", type=Path)
    p.add_argument("--events", dest="events_path", type=Path)
    p.add_argument("--index-events", dest="index_events_path", type=Path)
    p.add_argument("--out", dest="out_dir", type=Path)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_timeline)

    p = sub.add_parser("stats", help="histogram and stratified tables over episodes")
    p.add_argument("--episodes", dest="episodes_path", type=Path)
    p.add_argument("--persons", dest="persons_path", type=Path)
    p.add_argument("--events", dest="events_path", type=Path)
    p.add_argument("--index-events", dest="index_events_path", type=Path)
    p.add_argument("--out", dest="out_dir", type=Path)
    p.add_argument("--cutoff", dest="pandemic_cutoff", help="pandemic cutoff date (ISO)")
    p.add_argument("--condition", action="append", metavar="NAME=PATH", help="named concept-id set; repeatable")
    p.add_argument("--strata", type=Path, help="JSON strata spec (windows/cutoff/threshold)")
    p.add_argument("--unsuppressed", action="store_true", help="also write raw, unsuppressed CSV exports")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("simulate", help="generate a synthetic cohort with ground truth")
    p.add_argument("--out", dest="out_dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-persons", type=int, default=100)
    p.add_argument("--index-rate", type=float, default=0.3)
    p.add_argument("--drop-ga", type=float, default=0.0)
    p.add_argument("--conflict-ga", type=float, default=0.0)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--shift-max-days", type=int, default=7)
    p.add_argument("--drop-dod", type=float, default=0.0)
    p.add_argument("--pre-index", type=float, default=0.0)
    p.add_argument("--ga-concepts", dest="ga_concepts_path", type=Path)
    p.add_argument("--dod-concepts", dest="dod_concepts_path", type=Path)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="kappa over a matrix, or round-trip scoring")
    p.add_argument("--matrix", type=Path, help="labeled square confusion-matrix CSV")
    p.add_argument("--weighting", choices=[w.value for w in Weighting], default=Weighting.UNWEIGHTED.value)
    p.add_argument("--truth", type=Path, help="ground-truth table from simulate")
    p.add_argument("--episodes", type=Path, help="episodes table from infer")
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, GenerationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
