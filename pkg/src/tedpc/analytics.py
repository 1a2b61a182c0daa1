"""Descriptive outputs over an episode set.

Produces the index-event gestational-week histogram and the stratified
demographics/conditions table, with small-cell suppression applied at render
time only: raw counts are computed once and never altered by suppression.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable

from .episode_builder import PregnancyEpisode, age_at, gestational_week_of
from .errors import ConfigError
from .ingestion import ClinicalEvent, Person

PANDEMIC_CUTOFF = date(2020, 3, 1)
SUPPRESSION_THRESHOLD = 20
MAX_HISTOGRAM_WEEK = 45
SECOND_TRIMESTER_MAX_DAYS = 27 * 7

AGE_BANDS = ["15-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49"]
RACE_CATEGORIES = [
    "White",
    "Black",
    "Hispanic/Latino",
    "Asian",
    "NHOPI",
    "Other/unknown",
    "Multiracial",
]

_RACE_SYNONYMS = {
    "white": "White",
    "black": "Black",
    "black or african american": "Black",
    "hispanic/latino": "Hispanic/Latino",
    "hispanic or latino": "Hispanic/Latino",
    "asian": "Asian",
    "nhopi": "NHOPI",
    "native hawaiian or other pacific islander": "NHOPI",
    "multiracial": "Multiracial",
    "multiple": "Multiracial",
}


class PandemicStratum(str, Enum):
    PRE = "pre"
    PERI = "peri"


def pandemic_stratum_of(dod: date, cutoff: date = PANDEMIC_CUTOFF) -> PandemicStratum:
    """Classify a delivery as pre- or peri-pandemic by a single cutoff date."""
    return PandemicStratum.PRE if dod < cutoff else PandemicStratum.PERI


def suppress_small_cells(count: int, threshold: int = SUPPRESSION_THRESHOLD) -> str:
    """Rendered value of a count under small-cell suppression."""
    if count < 0:
        raise ValueError(f"negative count {count}")
    return "-" if count < threshold else str(count)


@dataclass
class StrataSpec:
    """Stratification settings: a single cutoff or two explicit windows.

    With explicit windows, deliveries falling in neither window are left out
    of the table entirely.
    """

    cutoff: date = PANDEMIC_CUTOFF
    pre_window: tuple[date, date] | None = None
    peri_window: tuple[date, date] | None = None
    threshold: int = SUPPRESSION_THRESHOLD

    def __post_init__(self):
        if (self.pre_window is None) != (self.peri_window is None):
            raise ConfigError("pre_window and peri_window must be given together")
        if self.threshold < 0:
            raise ConfigError("suppression threshold must be non-negative")

    def stratum_of(self, dod: date) -> PandemicStratum | None:
        if self.pre_window is not None:
            if self.pre_window[0] <= dod <= self.pre_window[1]:
                return PandemicStratum.PRE
            if self.peri_window[0] <= dod <= self.peri_window[1]:
                return PandemicStratum.PERI
            return None
        return pandemic_stratum_of(dod, self.cutoff)

    @classmethod
    def from_json(cls, path: Path | str) -> "StrataSpec":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        kwargs = {}
        if "cutoff" in raw:
            kwargs["cutoff"] = date.fromisoformat(raw["cutoff"])
        for key in ("pre_window", "peri_window"):
            if key in raw:
                lo, hi = raw[key]
                kwargs[key] = (date.fromisoformat(lo), date.fromisoformat(hi))
        if "threshold" in raw:
            kwargs["threshold"] = int(raw["threshold"])
        return cls(**kwargs)


def earliest_index_event(
    events: Iterable[ClinicalEvent], index_concepts: frozenset[int] | set[int], on_or_before: date
) -> ClinicalEvent | None:
    """Earliest event in the index concept set dated on or before a date."""
    best = None
    for event in events:
        if event.concept_id in index_concepts and event.event_date <= on_or_before:
            if best is None or (event.event_date, event.concept_id) < (best.event_date, best.concept_id):
                best = event
    return best


def infection_week_histogram(
    episodes: Iterable[PregnancyEpisode],
    events_by_person: dict[int, list[ClinicalEvent]],
    index_concepts: frozenset[int] | set[int],
    max_week: int = MAX_HISTOGRAM_WEEK,
) -> dict[int, int]:
    """Count episodes by the gestational week of their earliest index event.

    Week 0 is pre-pregnancy; only events on or before the delivery count, and
    each episode contributes at most once. Weeks past max_week collapse into
    the final bucket.
    """
    counts = {week: 0 for week in range(max_week + 1)}
    for episode in episodes:
        events = events_by_person.get(episode.person_id, [])
        hit = earliest_index_event(events, index_concepts, episode.dod)
        if hit is None:
            continue
        timing = gestational_week_of(hit.event_date, episode)
        counts[min(timing.week, max_week)] += 1
    return counts


def age_band_of(age: int) -> str | None:
    for band in AGE_BANDS:
        low, high = band.split("-")
        if int(low) <= age <= int(high):
            return band
    return None


def race_category_of(person: Person) -> str:
    """Collapse raw race/ethnicity text into the seven reporting categories."""
    if "hispanic" in person.ethnicity.lower() and "not" not in person.ethnicity.lower():
        return "Hispanic/Latino"
    return _RACE_SYNONYMS.get(person.race.strip().lower(), "Other/unknown")


# Column keys: totals per stratum, then index-event exposure splits.
COLUMN_LABELS = [
    ("pre_total", "Pre-pandemic (all)"),
    ("peri_total", "Peri-pandemic (all)"),
    ("index_no", "Index before delivery: no"),
    ("index_yes", "Index before delivery: yes"),
    ("t12_no", "Index in weeks 1-27: no"),
    ("t12_yes", "Index in weeks 1-27: yes"),
    ("t3_no", "Index in week 28+: no"),
    ("t3_yes", "Index in week 28+: yes"),
]


@dataclass
class StratifiedTable:
    """Counts per (characteristic row, stratum column) plus rendering rules."""

    columns: list[str]
    column_totals: list[int]
    sections: list[tuple[str, list[tuple[str, list[int]]]]]
    threshold: int = SUPPRESSION_THRESHOLD

    def csv_rows(self) -> list[list]:
        """Raw counts, never suppressed; suppression is render-only."""
        rows = [["section", "category"] + self.columns]
        rows.append(["total", "episodes"] + list(self.column_totals))
        for section, categories in self.sections:
            for category, counts in categories:
                rows.append([section, category] + list(counts))
        return rows

    def _cell(self, count: int, total: int, suppress: bool) -> str:
        if suppress and count < self.threshold:
            return "-"
        pct = f" ({100.0 * count / total:.1f}%)" if total else ""
        return f"{count}{pct}"

    def render_markdown(self, suppress: bool = True) -> str:
        lines = ["| Characteristic | " + " | ".join(self.columns) + " |"]
        lines.append("| --- |" + " --- |" * len(self.columns))
        totals = [
            "-" if suppress and t < self.threshold else str(t) for t in self.column_totals
        ]
        lines.append("| Episodes (n) | " + " | ".join(totals) + " |")
        for section, categories in self.sections:
            lines.append(f"| **{section}** |" + "  |" * len(self.columns))
            for category, counts in categories:
                cells = [
                    self._cell(count, total, suppress)
                    for count, total in zip(counts, self.column_totals)
                ]
                lines.append(f"| {category} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def stratified_table(
    episodes: Iterable[PregnancyEpisode],
    persons: dict[int, Person],
    events_by_person: dict[int, list[ClinicalEvent]],
    index_concepts: frozenset[int] | set[int],
    condition_sets: dict[str, frozenset[int] | set[int]],
    spec: StrataSpec | None = None,
) -> StratifiedTable:
    """Build the stratified demographics and conditions table.

    Rows are age bands, race categories, and a yes/no pair per condition set
    (any matching event on or before delivery). Columns split peri-pandemic
    episodes by index-event exposure overall, in weeks 1-27, and in week 28+
    (the latter only among gestations longer than 27 weeks). Percentages use
    unsuppressed column totals.
    """
    spec = spec or StrataSpec()
    keys = [key for key, _ in COLUMN_LABELS]
    features = []
    for episode in episodes:
        stratum = spec.stratum_of(episode.dod)
        if stratum is None:
            continue
        person = persons.get(episode.person_id)
        events = events_by_person.get(episode.person_id, [])
        hit = earliest_index_event(events, index_concepts, episode.dod)
        week = gestational_week_of(hit.event_date, episode).week if hit else None
        flags = {}
        peri = stratum is PandemicStratum.PERI
        long_gestation = episode.gestation_days > SECOND_TRIMESTER_MAX_DAYS
        flags["pre_total"] = stratum is PandemicStratum.PRE
        flags["peri_total"] = peri
        flags["index_yes"] = peri and week is not None
        flags["index_no"] = peri and week is None
        t12 = week is not None and 1 <= week <= 27
        flags["t12_yes"] = peri and t12
        flags["t12_no"] = peri and not t12
        t3 = week is not None and week >= 28
        flags["t3_yes"] = peri and long_gestation and t3
        flags["t3_no"] = peri and long_gestation and not t3
        conditions = {
            name: any(
                e.concept_id in concept_ids and e.event_date <= episode.dod for e in events
            )
            for name, concept_ids in condition_sets.items()
        }
        features.append((episode, person, flags, conditions))

    column_totals = [sum(1 for _, _, flags, _ in features if flags[key]) for key in keys]

    def count_where(predicate) -> list[int]:
        return [
            sum(1 for f in features if f[2][key] and predicate(f)) for key in keys
        ]

    sections: list[tuple[str, list[tuple[str, list[int]]]]] = []
    age_rows = []
    for band in AGE_BANDS:
        age_rows.append(
            (
                band,
                count_where(
                    lambda f, b=band: f[1] is not None
                    and age_band_of(age_at(f[1].birth_date, f[0].dod)) == b
                ),
            )
        )
    sections.append(("Age group", age_rows))
    race_rows = []
    for category in RACE_CATEGORIES:
        race_rows.append(
            (
                category,
                count_where(lambda f, c=category: f[1] is not None and race_category_of(f[1]) == c),
            )
        )
    sections.append(("Race", race_rows))
    for name in sorted(condition_sets):
        yes = count_where(lambda f, n=name: f[3][n])
        no = [total - y for total, y in zip(column_totals, yes)]
        sections.append((name, [("No", no), ("Yes", yes)]))

    return StratifiedTable(
        columns=[label for _, label in COLUMN_LABELS],
        column_totals=column_totals,
        sections=sections,
        threshold=spec.threshold,
    )


def render_histogram_markdown(
    counts: dict[int, int], threshold: int = SUPPRESSION_THRESHOLD, suppress: bool = True
) -> str:
    """Render the week histogram as a markdown table (week 0 = pre-pregnancy)."""
    lines = ["| Gestational week | Episodes |", "| --- | --- |"]
    for week in sorted(counts):
        label = "0 (pre-pregnancy)" if week == 0 else str(week)
        value = suppress_small_cells(counts[week], threshold) if suppress else str(counts[week])
        lines.append(f"| {label} | {value} |")
    return "\n".join(lines) + "\n"
