from datetime import date, timedelta

import numpy as np
import pytest

from oracles import match_reference
from tedpc.concept_registry import AccuracyLevel, Domain, GAConceptSpec
from tedpc.dod_engine import DeliveryRecord
from tedpc.episode_builder import (
    ExtremeFlag,
    PregnancyEpisode,
    Trimester,
    age_at,
    apply_cohort_filters,
    extreme_flag_of,
    gestational_week_of,
    match_episodes,
    read_episodes,
    trimester_of,
    week_of,
    write_episodes,
)
from tedpc.ga_engine import GACandidate, GestationStart
from tedpc.ingestion import ClinicalEvent, Person


def make_start(start, person_id=1, accuracy=AccuracyLevel.HIGH, conflict=False):
    spec = GAConceptSpec(100, "spec", 20, 20, accuracy, Domain.CONDITION, "SNOMED")
    event = ClinicalEvent(person_id, 100, Domain.CONDITION, start + timedelta(days=140))
    return GestationStart(person_id, start, GACandidate(event, spec, start, accuracy), accuracy, conflict, 1)


def make_dod(dod, person_id=1, rank=1):
    return DeliveryRecord(person_id, dod, 2110316, rank, 1)


def episode(start, dod, person_id=1, index=1):
    gestation = (dod - start).days
    return PregnancyEpisode(
        person_id, index, start, dod, gestation, AccuracyLevel.HIGH, 1, extreme_flag_of(gestation), False
    )


class TestMatchEpisodes:
    def test_single_compatible_pair(self):
        episodes, diag = match_episodes([make_start(date(2019, 12, 10))], [make_dod(date(2020, 9, 15))])
        assert len(episodes) == 1
        assert episodes[0].gestation_days == 280
        assert episodes[0].episode_index == 1
        assert not diag.unmatched_starts and not diag.unmatched_dods

    def test_too_short_gestation_leaves_both_unmatched(self):
        episodes, diag = match_episodes([make_start(date(2020, 1, 1))], [make_dod(date(2020, 2, 1))])
        assert episodes == []
        assert len(diag.unmatched_starts) == 1
        assert len(diag.unmatched_dods) == 1

    def test_two_pairs_nearest_plausible(self):
        starts = [make_start(date(2019, 12, 10)), make_start(date(2020, 11, 1))]
        dods = [make_dod(date(2020, 9, 15)), make_dod(date(2021, 7, 20))]
        episodes, diag = match_episodes(starts, dods)
        assert [(e.start_date, e.dod) for e in episodes] == [
            (date(2019, 12, 10), date(2020, 9, 15)),
            (date(2020, 11, 1), date(2021, 7, 20)),
        ]
        assert [e.episode_index for e in episodes] == [1, 2]

    def test_matching_is_injective_and_conserving(self):
        rng = np.random.default_rng(99)
        base = date(2018, 1, 1).toordinal()
        for _ in range(300):
            starts = [
                make_start(date.fromordinal(base + int(d)))
                for d in np.unique(rng.integers(0, 1500, size=rng.integers(0, 5)))
            ]
            dods = [
                make_dod(date.fromordinal(base + int(d)))
                for d in np.unique(rng.integers(0, 1500, size=rng.integers(0, 5)))
            ]
            episodes, diag = match_episodes(starts, dods)
            used_starts = [e.start_date for e in episodes]
            used_dods = [e.dod for e in episodes]
            assert len(set(used_starts)) == len(used_starts)
            assert len(set(used_dods)) == len(used_dods)
            assert len(episodes) + len(diag.unmatched_starts) == len(starts)
            assert len(episodes) + len(diag.unmatched_dods) == len(dods)

    def test_matches_reference_matcher(self):
        rng = np.random.default_rng(100)
        base = date(2018, 1, 1).toordinal()
        for _ in range(300):
            start_days = sorted(int(d) for d in np.unique(rng.integers(0, 1500, size=rng.integers(0, 5))))
            dod_days = sorted(int(d) for d in np.unique(rng.integers(0, 1500, size=rng.integers(0, 5))))
            starts = [date.fromordinal(base + d) for d in start_days]
            dods = [date.fromordinal(base + d) for d in dod_days]
            episodes, diag = match_episodes([make_start(s) for s in starts], [make_dod(d) for d in dods])
            pairs, leftover_starts, leftover_dods = match_reference(starts, dods)
            assert sorted((e.start_date, e.dod) for e in episodes) == pairs
            assert sorted(s.start_date for s in diag.unmatched_starts) == leftover_starts
            assert sorted(d.dod for d in diag.unmatched_dods) == leftover_dods

    def test_bounds_inclusive(self):
        episodes, _ = match_episodes([make_start(date(2020, 1, 1))], [make_dod(date(2020, 1, 1) + timedelta(days=140))])
        assert len(episodes) == 1
        episodes, _ = match_episodes([make_start(date(2020, 1, 1))], [make_dod(date(2020, 1, 1) + timedelta(days=308))])
        assert len(episodes) == 1
        episodes, _ = match_episodes([make_start(date(2020, 1, 1))], [make_dod(date(2020, 1, 1) + timedelta(days=309))])
        assert episodes == []


class TestExtremeFlags:
    def test_thresholds(self):
        assert extreme_flag_of(149) is ExtremeFlag.SHORT
        assert extreme_flag_of(150) is ExtremeFlag.NONE
        assert extreme_flag_of(300) is ExtremeFlag.NONE
        assert extreme_flag_of(301) is ExtremeFlag.LONG


class TestCohortFilters:
    PERSONS = {
        1: Person(1, date(2000, 1, 1), "F", "White", "x"),
        2: Person(2, date(2006, 6, 1), "F", "White", "x"),
    }

    def test_window_end_inclusive_age_21_retained(self):
        kept, excluded = apply_cohort_filters([episode(date(2020, 8, 25), date(2021, 5, 31))], self.PERSONS)
        assert len(kept) == 1 and not excluded

    def test_one_day_past_window_excluded(self):
        kept, excluded = apply_cohort_filters([episode(date(2020, 8, 26), date(2021, 6, 1))], self.PERSONS)
        assert kept == [] and excluded[0][1] == "delivery outside cohort window"

    def test_age_13_excluded(self):
        kept, excluded = apply_cohort_filters(
            [episode(date(2019, 4, 1), date(2020, 1, 1), person_id=2)], self.PERSONS
        )
        assert kept == [] and "age 13" in excluded[0][1]

    def test_missing_person_excluded_with_diagnostic(self):
        kept, excluded = apply_cohort_filters([episode(date(2019, 12, 1), date(2020, 9, 1), person_id=9)], self.PERSONS)
        assert kept == [] and "missing" in excluded[0][1]

    def test_age_boundaries_inclusive(self):
        persons = {
            1: Person(1, date(2005, 6, 1), "F", "W", "x"),  # turns 15 on 2020-06-01
            2: Person(2, date(1970, 6, 2), "F", "W", "x"),  # 49 until 2020-06-01
        }
        kept, _ = apply_cohort_filters([episode(date(2019, 8, 26), date(2020, 6, 1))], persons)
        assert len(kept) == 1
        kept, _ = apply_cohort_filters([episode(date(2019, 8, 26), date(2020, 6, 1), person_id=2)], persons)
        assert len(kept) == 1


class TestAgeAt:
    def test_birthday_not_yet_reached(self):
        assert age_at(date(2000, 6, 15), date(2020, 6, 14)) == 19
        assert age_at(date(2000, 6, 15), date(2020, 6, 15)) == 20

    def test_leap_day_birth(self):
        assert age_at(date(2000, 2, 29), date(2021, 2, 28)) == 20
        assert age_at(date(2000, 2, 29), date(2021, 3, 1)) == 21


class TestGestationalWeek:
    EPISODE = episode(date(2020, 1, 1), date(2020, 10, 7))

    def test_day_zero_is_week_one(self):
        timing = gestational_week_of(date(2020, 1, 1), self.EPISODE)
        assert timing.week == 1 and timing.trimester is Trimester.FIRST

    def test_day_seven_is_week_two(self):
        assert gestational_week_of(date(2020, 1, 8), self.EPISODE).week == 2

    def test_before_start_is_week_zero_pre(self):
        timing = gestational_week_of(date(2019, 12, 22), self.EPISODE)
        assert timing.week == 0 and timing.trimester is Trimester.PRE

    def test_day_189_is_week_28_third(self):
        timing = gestational_week_of(date(2020, 1, 1) + timedelta(days=189), self.EPISODE)
        assert timing.week == 28 and timing.trimester is Trimester.THIRD

    def test_after_delivery_keeps_week(self):
        timing = gestational_week_of(date(2020, 10, 8), self.EPISODE)
        assert timing.trimester is Trimester.POST_DELIVERY
        assert timing.week == week_of(self.EPISODE.start_date, date(2020, 10, 8))

    def test_monotone_in_event_date(self):
        previous = -1
        for offset in range(-20, 300):
            timing = gestational_week_of(self.EPISODE.start_date + timedelta(days=offset), self.EPISODE)
            assert timing.week >= previous
            previous = timing.week

    def test_trimester_partition(self):
        for week in range(1, 46):
            count = sum(
                trimester_of(week) is t for t in (Trimester.FIRST, Trimester.SECOND, Trimester.THIRD)
            )
            assert count == 1
        assert trimester_of(13) is Trimester.FIRST
        assert trimester_of(14) is Trimester.SECOND
        assert trimester_of(27) is Trimester.SECOND
        assert trimester_of(28) is Trimester.THIRD

    def test_negative_week_rejected(self):
        with pytest.raises(ValueError):
            trimester_of(-1)


class TestEpisodeIO:
    def test_round_trip(self, tmp_path):
        episodes = [
            episode(date(2019, 12, 10), date(2020, 9, 15)),
            episode(date(2020, 11, 1), date(2021, 1, 25), person_id=2),  # short, flagged
        ]
        path = tmp_path / "episodes.csv"
        write_episodes(path, episodes)
        loaded = read_episodes(path)
        assert loaded == episodes
        assert loaded[1].extreme_flag is ExtremeFlag.SHORT
