"""Seeded synthetic cohort generation with recorded ground truth.

The generator draws pregnancies whose starts and deliveries are separated by
more than the engines' clustering window, emits GA events whose concepts
contain the visit's true week, delivery events dated exactly on the true
delivery, and optional index events, then applies configurable noise
channels. Identical (seed, config) pairs produce byte-identical files.

Randomness comes from numpy's PCG64, seeded per person with
SeedSequence([seed, stream, person_id]), so persons are independent and the
output does not depend on generation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .concept_registry import AccuracyLevel, DODRegistry, Domain, GARegistry
from .episode_builder import COHORT_WINDOW
from .errors import ConfigError, GenerationError
from .ga_engine import SEPARATION_WINDOW_DAYS, ga_days
from .ingestion import ClinicalEvent, Person, write_events, write_persons

# Sub-stream tags so base generation and noise never share a random stream.
_BASE_STREAM = 0
_NOISE_STREAM = 1

MIN_GAP_DAYS = SEPARATION_WINDOW_DAYS + 1

DEFAULT_VISIT_WEEKS = (8, 12, 16, 20, 24, 28, 32, 36, 38, 40)
DEFAULT_INDEX_CONCEPT_ID = 900000001

_RACE_PROBS = (
    ("White", 0.50),
    ("Black", 0.17),
    ("Hispanic/Latino", 0.19),
    ("Asian", 0.05),
    ("NHOPI", 0.005),
    ("Other/unknown", 0.075),
    ("Multiracial", 0.01),
)


@dataclass
class NoiseSpec:
    """Per-event / per-gestation perturbation rates, all in [0, 1]."""

    drop_ga_rate: float = 0.0
    conflict_ga_rate: float = 0.0
    shift_rate: float = 0.0
    shift_max_days: int = 7
    drop_dod_rate: float = 0.0
    pre_pregnancy_index_rate: float = 0.0

    def validate(self) -> None:
        rates = {
            "drop_ga_rate": self.drop_ga_rate,
            "conflict_ga_rate": self.conflict_ga_rate,
            "shift_rate": self.shift_rate,
            "drop_dod_rate": self.drop_dod_rate,
            "pre_pregnancy_index_rate": self.pre_pregnancy_index_rate,
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"noise {name} must be in [0, 1], got {value}")
        if self.shift_max_days < 1:
            raise ConfigError("shift_max_days must be at least 1")


@dataclass
class SynthConfig:
    """Generator settings; identical (seed, config) means identical output."""

    seed: int = 0
    n_persons: int = 100
    gestation_count_probs: tuple[float, float, float] = (0.90, 0.09, 0.01)
    gestation_mean_days: float = 274.0
    gestation_sd_days: float = 12.0
    gestation_clamp_days: tuple[int, int] = (100, 320)
    ga_events_per_gestation: dict[AccuracyLevel, int] = field(
        default_factory=lambda: {
            AccuracyLevel.HIGH: 3,
            AccuracyLevel.MODERATE_HIGH: 1,
            AccuracyLevel.MODERATE_LOW: 1,
            AccuracyLevel.LOW: 2,
        }
    )
    dod_events_per_gestation: int = 2
    index_event_rate: float = 0.3
    index_concept_id: int = DEFAULT_INDEX_CONCEPT_ID
    window: tuple[date, date] = COHORT_WINDOW
    visit_weeks: tuple[int, ...] = DEFAULT_VISIT_WEEKS
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self) -> None:
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.n_persons < 0:
            raise ConfigError("n_persons must be non-negative")
        if abs(sum(self.gestation_count_probs) - 1.0) > 1e-9:
            raise ConfigError("gestation_count_probs must sum to 1")
        lo, hi = self.gestation_clamp_days
        if not 0 < lo <= hi:
            raise ConfigError("gestation_clamp_days must satisfy 0 < low <= high")
        if self.window[0] > self.window[1]:
            raise ConfigError("window start must not be after window end")
        if not 0.0 <= self.index_event_rate <= 1.0:
            raise ConfigError("index_event_rate must be in [0, 1]")
        if self.dod_events_per_gestation < 0:
            raise ConfigError("dod_events_per_gestation must be non-negative")
        self.noise.validate()


class TruthRecord(NamedTuple):
    person_id: int
    episode_index: int
    true_start: date
    true_dod: date
    index_event_week: int | None


class NoiseLogEntry(NamedTuple):
    channel: str
    person_id: int
    concept_id: int
    event_date: date
    detail: str


TRUTH_HEADER = ["person_id", "episode_index", "true_start", "true_dod", "index_event_week"]
NOISE_LOG_HEADER = ["channel", "person_id", "concept_id", "event_date", "detail"]


@dataclass
class SyntheticCohort:
    """Generated tables plus ground truth and the noise sidecar log."""

    persons: list[Person]
    events: list[ClinicalEvent]
    truth: list[TruthRecord]
    noise_log: list[NoiseLogEntry]
    index_concept_id: int

    def write(self, out_dir: Path | str) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "persons": out_dir / "persons.csv",
            "events": out_dir / "events.csv",
            "truth": out_dir / "truth.csv",
            "noise_log": out_dir / "noise_log.csv",
            "index_concepts": out_dir / "index_concepts.csv",
        }
        write_persons(paths["persons"], self.persons)
        write_events(paths["events"], self.events)
        write_truth(paths["truth"], self.truth)
        with open(paths["noise_log"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(NOISE_LOG_HEADER)
            for entry in sorted(self.noise_log):
                writer.writerow(
                    [entry.channel, entry.person_id, entry.concept_id, entry.event_date.isoformat(), entry.detail]
                )
        with open(paths["index_concepts"], "w", newline="", encoding="utf-8") as fh:
            fh.write("concept_id\n")
            fh.write(f"{self.index_concept_id}\n")
        return paths


def write_truth(path: Path | str, truth: Iterable[TruthRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRUTH_HEADER)
        for t in sorted(truth, key=lambda t: (t.person_id, t.episode_index)):
            week = "" if t.index_event_week is None else t.index_event_week
            writer.writerow([t.person_id, t.episode_index, t.true_start.isoformat(), t.true_dod.isoformat(), week])


def read_truth(path: Path | str) -> list[TruthRecord]:
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRUTH_HEADER:
            raise GenerationError(f"{path}: bad truth header {header!r}")
        for row in reader:
            if not row:
                continue
            week = int(row[4]) if row[4] != "" else None
            records.append(
                TruthRecord(int(row[0]), int(row[1]), date.fromisoformat(row[2]), date.fromisoformat(row[3]), week)
            )
    return records


def _person_rng(seed: int, stream: int, person_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, person_id])


def _plan_gestations(rng: np.random.Generator, config: SynthConfig) -> list[tuple[date, date, int]]:
    """Draw (start, delivery, length) triples with deliveries inside the window.

    Consecutive gestations are separated by a gap of at least MIN_GAP_DAYS
    between one delivery and the next start, which keeps both consecutive
    starts and consecutive deliveries more than the clustering window apart.
    """
    window_start, window_end = config.window
    window_len = (window_end - window_start).days
    lo, hi = config.gestation_clamp_days
    n_gestations = 1 + int(rng.choice(3, p=list(config.gestation_count_probs)))
    lengths = None
    for _ in range(100):
        draw = np.clip(
            np.rint(rng.normal(config.gestation_mean_days, config.gestation_sd_days, n_gestations)), lo, hi
        ).astype(int)
        min_span = int(sum(MIN_GAP_DAYS + int(g) for g in draw[1:]))
        if min_span <= window_len:
            lengths = [int(g) for g in draw]
            break
    if lengths is None:
        raise GenerationError(
            f"cannot place {n_gestations} gestations separated by {MIN_GAP_DAYS} days "
            f"inside a {window_len}-day delivery window"
        )
    slack = window_len - int(sum(MIN_GAP_DAYS + g for g in lengths[1:]))
    gaps = []
    for _ in range(n_gestations - 1):
        extra = int(rng.integers(0, min(slack, 120) + 1))
        gaps.append(MIN_GAP_DAYS + extra)
        slack -= extra
    first_dod = window_start + timedelta(days=int(rng.integers(0, slack + 1)))
    triples = []
    dod = first_dod
    for i, length in enumerate(lengths):
        if i > 0:
            dod = triples[-1][1] + timedelta(days=gaps[i - 1] + length)
        triples.append((dod - timedelta(days=length), dod, length))
    return triples


def _range_event(
    rng: np.random.Generator,
    person_id: int,
    start: date,
    gestation_days: int,
    pool: list,
) -> ClinicalEvent | None:
    """One GA event from a week-range pool; the event's true week stays in range."""
    max_week = gestation_days // 7
    for _ in range(8):
        spec = pool[int(rng.integers(0, len(pool)))]
        week_lo = max(spec.week_low, 1)
        week_hi = min(spec.week_high, max_week)
        if week_lo > week_hi:
            continue
        week = int(rng.integers(week_lo, week_hi + 1))
        offset = min(7 * week + int(rng.integers(0, 7)), gestation_days)
        return ClinicalEvent(person_id, spec.concept_id, spec.domain, start + timedelta(days=offset))
    return None


def generate_cohort(
    config: SynthConfig, ga_registry: GARegistry, dod_registry: DODRegistry
) -> SyntheticCohort:
    """Generate persons, events, and ground truth under the given config.

    Concepts appearing in both registries are excluded from sampling so a
    generated event feeds exactly one engine; both engines still handle such
    concepts when they occur in real data.
    """
    config.validate()
    if config.index_concept_id in ga_registry or config.index_concept_id in dod_registry:
        raise ConfigError(f"index_concept_id {config.index_concept_id} collides with a registry concept")
    overlap = {spec.concept_id for spec in ga_registry if spec.concept_id in dod_registry}
    high_by_week = {
        spec.week_low: spec
        for spec in ga_registry.by_accuracy(AccuracyLevel.HIGH)
        if spec.concept_id not in overlap
    }
    range_pools = {
        level: [s for s in ga_registry.by_accuracy(level) if s.concept_id not in overlap]
        for level in (AccuracyLevel.MODERATE_HIGH, AccuracyLevel.MODERATE_LOW, AccuracyLevel.LOW)
    }
    dod_pool = [spec for spec in dod_registry if spec.concept_id not in overlap]
    if not high_by_week or not dod_pool:
        raise GenerationError("registries too small to generate events")

    race_labels = [label for label, _ in _RACE_PROBS]
    race_probs = [p for _, p in _RACE_PROBS]

    persons: list[Person] = []
    events: list[ClinicalEvent] = []
    episodes: list[tuple[int, int, date, date]] = []
    for person_id in range(1, config.n_persons + 1):
        rng = _person_rng(config.seed, _BASE_STREAM, person_id)
        triples = _plan_gestations(rng, config)
        age_years = int(rng.integers(16, 45))
        birth = triples[0][1] - timedelta(days=age_years * 365 + int(rng.integers(0, 365)))
        race = race_labels[int(rng.choice(len(race_labels), p=race_probs))]
        ethnicity = "Hispanic or Latino" if race == "Hispanic/Latino" else "Not Hispanic or Latino"
        persons.append(Person(person_id, birth, "F", race, ethnicity))
        for index, (start, dod, gestation_days) in enumerate(triples, start=1):
            episodes.append((person_id, index, start, dod))
            max_week = gestation_days // 7
            schedule = [w for w in config.visit_weeks if w <= max_week and w in high_by_week]
            n_high = config.ga_events_per_gestation.get(AccuracyLevel.HIGH, 0)
            if schedule and n_high:
                picks = sorted(
                    int(i) for i in rng.choice(len(schedule), size=min(n_high, len(schedule)), replace=False)
                )
                for i in picks:
                    week = schedule[i]
                    spec = high_by_week[week]
                    # Exact placement: the event implies precisely the true start.
                    events.append(
                        ClinicalEvent(person_id, spec.concept_id, spec.domain, start + timedelta(days=7 * week))
                    )
            for level in (AccuracyLevel.MODERATE_HIGH, AccuracyLevel.MODERATE_LOW, AccuracyLevel.LOW):
                pool = range_pools[level]
                if not pool:
                    continue
                for _ in range(config.ga_events_per_gestation.get(level, 0)):
                    event = _range_event(rng, person_id, start, gestation_days, pool)
                    if event is not None:
                        events.append(event)
            n_dod = min(config.dod_events_per_gestation, len(dod_pool))
            if n_dod:
                for i in rng.choice(len(dod_pool), size=n_dod, replace=False):
                    spec = dod_pool[int(i)]
                    events.append(ClinicalEvent(person_id, spec.concept_id, spec.domain, dod))
            if config.index_event_rate and rng.random() < config.index_event_rate:
                offset = int(rng.integers(0, gestation_days + 1))
                events.append(
                    ClinicalEvent(person_id, config.index_concept_id, Domain.CONDITION, start + timedelta(days=offset))
                )

    events, noise_log = inject_noise(
        events,
        config.noise,
        config.seed,
        ga_registry,
        dod_registry,
        truth=[TruthRecord(p, i, s, d, None) for p, i, s, d in episodes],
        index_concept_id=config.index_concept_id,
    )

    # Ground-truth index weeks follow the same rule analytics applies: the
    # earliest index event on or before the delivery, week 0 when pre-start.
    index_by_person: dict[int, list[ClinicalEvent]] = {}
    for event in events:
        if event.concept_id == config.index_concept_id:
            index_by_person.setdefault(event.person_id, []).append(event)
    truth: list[TruthRecord] = []
    for person_id, index, start, dod in episodes:
        week = None
        hits = [e for e in index_by_person.get(person_id, []) if e.event_date <= dod]
        if hits:
            earliest = min(hits, key=lambda e: e.event_date)
            week = 0 if earliest.event_date < start else (earliest.event_date - start).days // 7 + 1
        truth.append(TruthRecord(person_id, index, start, dod, week))

    events.sort(key=lambda e: (e.person_id, e.event_date, e.concept_id))
    return SyntheticCohort(persons, events, truth, noise_log, config.index_concept_id)


def inject_noise(
    events: list[ClinicalEvent],
    noise: NoiseSpec,
    seed: int,
    ga_registry: GARegistry,
    dod_registry: DODRegistry | None = None,
    truth: list[TruthRecord] | None = None,
    index_concept_id: int = DEFAULT_INDEX_CONCEPT_ID,
) -> tuple[list[ClinicalEvent], list[NoiseLogEntry]]:
    """Apply noise channels independently per event (or per gestation).

    Channels, in order: drop GA events, drop delivery events, shift event
    dates, add a same-date conflicting GA event, add a pre-pregnancy index
    event. Conflicts use a low-accuracy concept whose implied start disagrees
    with the original event's by more than 14 days but stays well inside the
    clustering window, so gestation separability is preserved. The
    pre-pregnancy channel needs ground truth to know where pregnancies start.
    """
    noise.validate()
    if noise.pre_pregnancy_index_rate > 0.0 and truth is None:
        raise ConfigError("pre_pregnancy_index_rate needs ground truth to locate starts")
    low_pool = ga_registry.by_accuracy(AccuracyLevel.LOW)
    truth_by_person: dict[int, list[TruthRecord]] = {}
    for record in truth or []:
        truth_by_person.setdefault(record.person_id, []).append(record)
    events_by_person: dict[int, list[ClinicalEvent]] = {}
    for event in events:
        events_by_person.setdefault(event.person_id, []).append(event)

    result: list[ClinicalEvent] = []
    log: list[NoiseLogEntry] = []
    for person_id in sorted(set(events_by_person) | set(truth_by_person)):
        rng = _person_rng(seed, _NOISE_STREAM, person_id)
        kept: list[ClinicalEvent] = []
        for event in events_by_person.get(person_id, []):
            in_ga = event.concept_id in ga_registry
            in_dod = dod_registry is not None and event.concept_id in dod_registry
            if in_ga and noise.drop_ga_rate and rng.random() < noise.drop_ga_rate:
                log.append(NoiseLogEntry("drop_ga", person_id, event.concept_id, event.event_date, "dropped"))
                continue
            if in_dod and not in_ga and noise.drop_dod_rate and rng.random() < noise.drop_dod_rate:
                log.append(NoiseLogEntry("drop_dod", person_id, event.concept_id, event.event_date, "dropped"))
                continue
            if (in_ga or in_dod) and noise.shift_rate and rng.random() < noise.shift_rate:
                delta = int(rng.integers(1, noise.shift_max_days + 1))
                if rng.random() < 0.5:
                    delta = -delta
                shifted = event._replace(event_date=event.event_date + timedelta(days=delta))
                log.append(
                    NoiseLogEntry("shift", person_id, event.concept_id, event.event_date, f"shifted {delta:+d}d")
                )
                kept.append(shifted)
                continue
            kept.append(event)
        additions: list[ClinicalEvent] = []
        if noise.conflict_ga_rate:
            for event in kept:
                spec = ga_registry.get(event.concept_id)
                if spec is None or rng.random() >= noise.conflict_ga_rate:
                    continue
                base_days = ga_days(spec)
                options = [c for c in low_pool if 14 < abs(ga_days(c) - base_days) <= 200]
                if not options:
                    continue
                chosen = options[int(rng.integers(0, len(options)))]
                additions.append(ClinicalEvent(person_id, chosen.concept_id, chosen.domain, event.event_date))
                log.append(
                    NoiseLogEntry(
                        "conflict_ga",
                        person_id,
                        chosen.concept_id,
                        event.event_date,
                        f"conflicts with {event.concept_id} by {ga_days(chosen) - base_days:+d}d",
                    )
                )
        if noise.pre_pregnancy_index_rate:
            for record in truth_by_person.get(person_id, []):
                if rng.random() < noise.pre_pregnancy_index_rate:
                    event_date = record.true_start - timedelta(days=int(rng.integers(7, 91)))
                    additions.append(ClinicalEvent(person_id, index_concept_id, Domain.CONDITION, event_date))
                    log.append(
                        NoiseLogEntry("pre_index", person_id, index_concept_id, event_date, "pre-pregnancy index event")
                    )
        result.extend(kept)
        result.extend(additions)
    result.sort(key=lambda e: (e.person_id, e.event_date, e.concept_id))
    return result, log
