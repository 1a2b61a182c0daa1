"""Consolidation of start and delivery streams into pregnancy episodes.

Deliveries are matched latest-first to the unused start whose implied
gestation length is plausible and closest to 280 days. Matched pairs become
episodes; everything unmatched is reported. Episodes can then be filtered by
the cohort inclusion rules (delivery window, maternal age) and queried for
the gestational week of arbitrary index events.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable

from .concept_registry import ACCURACY_TOKENS, TOKEN_BY_ACCURACY, AccuracyLevel
from .dod_engine import DeliveryRecord
from .errors import DataFormatError, InvariantError
from .ga_engine import GestationStart
from .ingestion import Person

# Plausible gestation length for matching a delivery to a start, in days.
MATCH_MIN_DAYS = 140
MATCH_MAX_DAYS = 308
TYPICAL_GESTATION_DAYS = 280

# Extreme gestation lengths flagged for review (never excluded by flagging).
SHORT_GESTATION_DAYS = 150
LONG_GESTATION_DAYS = 300

# Cohort inclusion: at least one delivery inside the window, maternal age in range.
COHORT_WINDOW = (date(2018, 6, 1), date(2021, 5, 31))
MIN_AGE_AT_DELIVERY = 15
MAX_AGE_AT_DELIVERY = 49

FIRST_TRIMESTER_MAX_WEEK = 13
SECOND_TRIMESTER_MAX_WEEK = 27


class Trimester(str, Enum):
    PRE = "pre"
    FIRST = "first"
    SECOND = "second"
    THIRD = "third"
    POST_DELIVERY = "post_delivery"


class ExtremeFlag(str, Enum):
    NONE = "none"
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class GestationalTiming:
    """Gestational week (0 = pre-pregnancy) and trimester of one event."""

    week: int
    trimester: Trimester


@dataclass(frozen=True)
class PregnancyEpisode:
    """One consolidated (start, delivery) pair for one gestation."""

    person_id: int
    episode_index: int
    start_date: date
    dod: date
    gestation_days: int
    ga_accuracy: AccuracyLevel
    dod_domain_rank: int
    extreme_flag: ExtremeFlag
    conflict_flag: bool


@dataclass
class MatchDiagnostics:
    """Starts and deliveries left unpaired by episode matching."""

    unmatched_starts: list[GestationStart] = field(default_factory=list)
    unmatched_dods: list[DeliveryRecord] = field(default_factory=list)


def extreme_flag_of(gestation_days: int) -> ExtremeFlag:
    if gestation_days < SHORT_GESTATION_DAYS:
        return ExtremeFlag.SHORT
    if gestation_days > LONG_GESTATION_DAYS:
        return ExtremeFlag.LONG
    return ExtremeFlag.NONE


def match_episodes(
    starts: list[GestationStart],
    dods: list[DeliveryRecord],
    min_days: int = MATCH_MIN_DAYS,
    max_days: int = MATCH_MAX_DAYS,
) -> tuple[list[PregnancyEpisode], MatchDiagnostics]:
    """Pair one person's delivery dates with pregnancy starts.

    Deliveries are processed latest first. A start is eligible when the
    implied gestation length lies in [min_days, max_days]; among eligible
    starts the one closest to 280 days wins, earlier start on a tie. Each
    start and delivery is used at most once; leftovers are reported.
    """
    person_ids = {s.person_id for s in starts} | {d.person_id for d in dods}
    if len(person_ids) > 1:
        raise InvariantError("episode matching called with more than one person")
    diagnostics = MatchDiagnostics()
    unused = list(starts)
    pairs: list[tuple[GestationStart, DeliveryRecord]] = []
    for record in sorted(dods, key=lambda d: d.dod, reverse=True):
        best = None
        best_key = None
        for start in unused:
            gestation = (record.dod - start.start_date).days
            if not (min_days <= gestation <= max_days):
                continue
            key = (abs(gestation - TYPICAL_GESTATION_DAYS), start.start_date)
            if best_key is None or key < best_key:
                best, best_key = start, key
        if best is None:
            diagnostics.unmatched_dods.append(record)
        else:
            unused.remove(best)
            pairs.append((best, record))
    diagnostics.unmatched_starts.extend(unused)
    pairs.sort(key=lambda p: p[0].start_date)
    episodes = []
    for index, (start, record) in enumerate(pairs, start=1):
        gestation = (record.dod - start.start_date).days
        episodes.append(
            PregnancyEpisode(
                person_id=start.person_id,
                episode_index=index,
                start_date=start.start_date,
                dod=record.dod,
                gestation_days=gestation,
                ga_accuracy=start.accuracy,
                dod_domain_rank=record.domain_rank,
                extreme_flag=extreme_flag_of(gestation),
                conflict_flag=start.conflict_flag,
            )
        )
    return episodes, diagnostics


def age_at(birth_date: date, on_date: date) -> int:
    """Whole years elapsed between birth_date and on_date."""
    years = on_date.year - birth_date.year
    if (on_date.month, on_date.day) < (birth_date.month, birth_date.day):
        years -= 1
    return years


def apply_cohort_filters(
    episodes: Iterable[PregnancyEpisode],
    persons: dict[int, Person],
    window: tuple[date, date] = COHORT_WINDOW,
    min_age: int = MIN_AGE_AT_DELIVERY,
    max_age: int = MAX_AGE_AT_DELIVERY,
) -> tuple[list[PregnancyEpisode], list[tuple[PregnancyEpisode, str]]]:
    """Retain episodes delivered inside the window with maternal age in range.

    Age is whole years at delivery, bounds inclusive. Episodes whose person is
    missing from the persons table are excluded with a diagnostic.
    """
    kept: list[PregnancyEpisode] = []
    excluded: list[tuple[PregnancyEpisode, str]] = []
    for episode in episodes:
        person = persons.get(episode.person_id)
        if person is None:
            excluded.append((episode, "person missing from persons table"))
            continue
        if not (window[0] <= episode.dod <= window[1]):
            excluded.append((episode, "delivery outside cohort window"))
            continue
        age = age_at(person.birth_date, episode.dod)
        if not (min_age <= age <= max_age):
            excluded.append((episode, f"age {age} at delivery outside [{min_age}, {max_age}]"))
            continue
        kept.append(episode)
    return kept, excluded


def week_of(start_date: date, event_date: date) -> int:
    """Ordinal gestational week of a date on/after the start; day 0 is week 1."""
    return (event_date - start_date).days // 7 + 1


def trimester_of(week: int) -> Trimester:
    """Trimester of a gestational week; week 0 is pre-pregnancy."""
    if week < 0:
        raise ValueError(f"negative gestational week {week}")
    if week == 0:
        return Trimester.PRE
    if week <= FIRST_TRIMESTER_MAX_WEEK:
        return Trimester.FIRST
    if week <= SECOND_TRIMESTER_MAX_WEEK:
        return Trimester.SECOND
    return Trimester.THIRD


def gestational_week_of(event_date: date, episode: PregnancyEpisode) -> GestationalTiming:
    """Map an event date onto an episode's gestational timeline.

    Dates before the start are week 0 (pre-pregnancy); dates after the
    delivery keep their computed week but are marked post-delivery.
    """
    if event_date < episode.start_date:
        return GestationalTiming(0, Trimester.PRE)
    week = week_of(episode.start_date, event_date)
    if event_date > episode.dod:
        return GestationalTiming(week, Trimester.POST_DELIVERY)
    return GestationalTiming(week, trimester_of(week))


EPISODE_HEADER = [
    "person_id",
    "episode_index",
    "start_date",
    "dod",
    "gestation_days",
    "ga_accuracy",
    "dod_domain_rank",
    "extreme_flag",
    "conflict_flag",
]


def write_episodes(path: Path | str, episodes: Iterable[PregnancyEpisode]) -> None:
    """Write episodes in canonical (person, episode index) order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPISODE_HEADER)
        for e in sorted(episodes, key=lambda e: (e.person_id, e.episode_index)):
            writer.writerow(
                [
                    e.person_id,
                    e.episode_index,
                    e.start_date.isoformat(),
                    e.dod.isoformat(),
                    e.gestation_days,
                    TOKEN_BY_ACCURACY[e.ga_accuracy],
                    e.dod_domain_rank,
                    e.extreme_flag.value,
                    str(e.conflict_flag).lower(),
                ]
            )


def read_episodes(path: Path | str) -> list[PregnancyEpisode]:
    """Read an episodes table written by write_episodes."""
    path = Path(path)
    episodes = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EPISODE_HEADER:
            raise DataFormatError(f"{path}: bad header {header!r}, expected {EPISODE_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                episodes.append(
                    PregnancyEpisode(
                        person_id=int(row[0]),
                        episode_index=int(row[1]),
                        start_date=date.fromisoformat(row[2]),
                        dod=date.fromisoformat(row[3]),
                        gestation_days=int(row[4]),
                        ga_accuracy=ACCURACY_TOKENS[row[5]],
                        dod_domain_rank=int(row[6]),
                        extreme_flag=ExtremeFlag(row[7]),
                        conflict_flag=row[8] == "true",
                    )
                )
            except (ValueError, KeyError) as exc:
                raise DataFormatError(f"{path}:{line_no}: bad episode row: {exc}") from None
    return episodes
