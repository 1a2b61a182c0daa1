"""End-to-end orchestration shared by the CLI and tests.

Inference runs per person and persons are independent, so the person loop
can fan out across a thread pool; results are always collected and written
in person-id order, making output bytes independent of the thread count.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .analytics import (
    StrataSpec,
    infection_week_histogram,
    render_histogram_markdown,
    stratified_table,
    suppress_small_cells,
)
from .concept_registry import (
    TOKEN_BY_ACCURACY,
    load_dod_concepts,
    load_ga_concepts,
    read_concept_ids,
)
from .config import RunConfig
from .dod_engine import DeliveryRecord, infer_delivery_dates
from .episode_builder import (
    MatchDiagnostics,
    PregnancyEpisode,
    apply_cohort_filters,
    gestational_week_of,
    match_episodes,
    read_episodes,
    write_episodes,
)
from .errors import InvariantError
from .ga_engine import GestationStart, build_candidates, infer_gestation_starts
from .ingestion import load_events, load_persons, write_events

logger = logging.getLogger(__name__)

_PersonResult = tuple[list[GestationStart], list[DeliveryRecord], list[PregnancyEpisode], MatchDiagnostics]


def _check_separation(values: list, window_days: int, kind: str, person_id: int) -> None:
    ordinals = sorted(v.toordinal() for v in values)
    for a, b in zip(ordinals, ordinals[1:]):
        if b - a <= window_days:
            raise InvariantError(
                f"person {person_id}: two {kind} values {b - a} days apart, "
                f"expected more than {window_days}"
            )


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_infer(config: RunConfig) -> dict:
    """Run ingestion, both engines, and episode consolidation; write outputs.

    Returns the summary that is also written to summary.json. The summary
    deliberately excludes runtime settings such as the thread count so reruns
    are byte-identical.
    """
    config.validate()
    ga_registry = load_ga_concepts(config.ga_concepts_path)
    dod_registry = load_dod_concepts(config.dod_concepts_path)
    persons = load_persons(config.persons_path)
    table = load_events(config.events_path, ga_registry, dod_registry, known_persons=persons)

    def infer_person(person_id: int) -> _PersonResult:
        events = table.events_by_person[person_id]
        starts = infer_gestation_starts(
            build_candidates(events, ga_registry),
            window_days=config.window_days,
            conflict_days=config.conflict_days,
        )
        records = infer_delivery_dates(events, dod_registry, window_days=config.window_days)
        episodes, diagnostics = match_episodes(
            starts, records, min_days=config.match_min_days, max_days=config.match_max_days
        )
        return starts, records, episodes, diagnostics

    person_ids = sorted(table.events_by_person)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(infer_person, person_ids))
    else:
        results = [infer_person(pid) for pid in person_ids]

    all_starts: list[GestationStart] = []
    all_records: list[DeliveryRecord] = []
    episodes: list[PregnancyEpisode] = []
    unmatched_starts: list[GestationStart] = []
    unmatched_dods: list[DeliveryRecord] = []
    for person_id, (starts, records, person_episodes, diagnostics) in zip(person_ids, results):
        _check_separation([s.start_date for s in starts], config.window_days, "start", person_id)
        _check_separation([r.dod for r in records], config.window_days, "delivery", person_id)
        all_starts.extend(starts)
        all_records.extend(records)
        episodes.extend(person_episodes)
        unmatched_starts.extend(diagnostics.unmatched_starts)
        unmatched_dods.extend(diagnostics.unmatched_dods)

    excluded: list[tuple[PregnancyEpisode, str]] = []
    if config.apply_filters:
        episodes, excluded = apply_cohort_filters(
            episodes,
            persons,
            window=(config.cohort_start, config.cohort_end),
            min_age=config.min_age,
            max_age=config.max_age,
        )

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_episodes(out / "episodes.csv", episodes)
    _write_csv(
        out / "unmatched_starts.csv",
        ["person_id", "start_date", "anchor_concept_id", "accuracy"],
        [
            [s.person_id, s.start_date.isoformat(), s.anchor.event.concept_id, TOKEN_BY_ACCURACY[s.accuracy]]
            for s in unmatched_starts
        ],
    )
    _write_csv(
        out / "unmatched_dods.csv",
        ["person_id", "dod", "anchor_concept_id", "domain_rank"],
        [[r.person_id, r.dod.isoformat(), r.anchor_concept_id, r.domain_rank] for r in unmatched_dods],
    )
    write_events(out / "quarantine.csv", table.quarantined)
    _write_csv(
        out / "excluded_episodes.csv",
        ["person_id", "episode_index", "start_date", "dod", "reason"],
        [
            [e.person_id, e.episode_index, e.start_date.isoformat(), e.dod.isoformat(), reason]
            for e, reason in excluded
        ],
    )
    if config.emit_cohorts:
        _write_csv(
            out / "ga_cohort.csv",
            ["person_id", "start_date", "anchor_concept_id", "anchor_event_date", "accuracy", "cluster_size", "conflict_flag"],
            [
                [
                    s.person_id,
                    s.start_date.isoformat(),
                    s.anchor.event.concept_id,
                    s.anchor.event.event_date.isoformat(),
                    TOKEN_BY_ACCURACY[s.accuracy],
                    s.cluster_size,
                    str(s.conflict_flag).lower(),
                ]
                for s in all_starts
            ],
        )
        _write_csv(
            out / "dod_cohort.csv",
            ["person_id", "dod", "anchor_concept_id", "domain_rank", "cluster_size"],
            [
                [r.person_id, r.dod.isoformat(), r.anchor_concept_id, r.domain_rank, r.cluster_size]
                for r in all_records
            ],
        )

    summary = {
        "persons": len(persons),
        "event_rows": table.total_rows,
        "events_quarantined": len(table.quarantined),
        "domain_mismatches": table.domain_mismatches,
        "gestation_starts": len(all_starts),
        "delivery_records": len(all_records),
        "episodes": len(episodes),
        "episodes_excluded_by_filters": len(excluded),
        "unmatched_starts": len(unmatched_starts),
        "unmatched_dods": len(unmatched_dods),
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("inference summary: %s", summary)
    return summary


def run_timeline(config: RunConfig) -> int:
    """Join index events to episodes and write timing.csv; returns row count.

    Each episode is joined with every index event of its person dated on or
    before that episode's delivery; events before the start map to week 0.
    """
    config.validate()
    episodes = read_episodes(config.episodes_path)
    table = load_events(config.events_path)
    index_concepts = read_concept_ids(config.index_events_path)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for episode in sorted(episodes, key=lambda e: (e.person_id, e.episode_index)):
        for event in table.events_by_person.get(episode.person_id, []):
            if event.concept_id not in index_concepts or event.event_date > episode.dod:
                continue
            timing = gestational_week_of(event.event_date, episode)
            rows.append(
                [
                    episode.person_id,
                    episode.episode_index,
                    event.concept_id,
                    event.event_date.isoformat(),
                    timing.week,
                    timing.trimester.value,
                ]
            )
    _write_csv(
        out / "timing.csv",
        ["person_id", "episode_index", "index_concept_id", "event_date", "gestational_week", "trimester"],
        rows,
    )
    return len(rows)


def run_stats(
    config: RunConfig,
    condition_set_paths: dict[str, Path],
    strata: StrataSpec | None = None,
    unsuppressed: bool = False,
) -> None:
    """Render the index-week histogram and stratified table into out_dir.

    report.md is always suppression-masked; the raw CSV exports are written
    only when `unsuppressed` is set.
    """
    config.validate()
    episodes = read_episodes(config.episodes_path)
    persons = load_persons(config.persons_path)
    table = load_events(config.events_path)
    index_concepts = read_concept_ids(config.index_events_path)
    condition_sets = {name: read_concept_ids(path) for name, path in sorted(condition_set_paths.items())}
    if strata is None:
        strata = StrataSpec(cutoff=config.pandemic_cutoff, threshold=config.suppression_threshold)

    histogram = infection_week_histogram(episodes, table.events_by_person, index_concepts)
    report_table = stratified_table(
        episodes, persons, table.events_by_person, index_concepts, condition_sets, strata
    )

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "# Episode statistics",
        "",
        f"Episodes: {suppress_small_cells(len(episodes), strata.threshold)}",
        "",
        "## Index events by gestational week",
        "",
        render_histogram_markdown(histogram, strata.threshold),
        "## Stratified characteristics",
        "",
        report_table.render_markdown(),
        f"Cells with fewer than {strata.threshold} episodes are shown as \"-\".",
        "",
    ]
    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    if unsuppressed:
        _write_csv(out / "histogram.csv", ["gestational_week", "episodes"], sorted(histogram.items()))
        rows = report_table.csv_rows()
        _write_csv(out / "report.csv", rows[0], rows[1:])
