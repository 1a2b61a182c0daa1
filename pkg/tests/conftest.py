from datetime import date

import numpy as np
import pytest

from tedpc.concept_registry import (
    default_dod_concepts_path,
    default_ga_concepts_path,
    load_dod_concepts,
    load_ga_concepts,
)
from tedpc.ingestion import ClinicalEvent


@pytest.fixture(scope="session")
def ga_registry():
    return load_ga_concepts(default_ga_concepts_path())


@pytest.fixture(scope="session")
def dod_registry():
    return load_dod_concepts(default_dod_concepts_path())


def random_ga_events(rng: np.random.Generator, ga_registry, max_events=10, person_id=1):
    """Random GA events for one person, drawn from the shipped concept set."""
    specs = list(ga_registry)
    n = int(rng.integers(0, max_events + 1))
    base = date(2018, 6, 1).toordinal()
    events = []
    for _ in range(n):
        spec = specs[int(rng.integers(0, len(specs)))]
        day = date.fromordinal(base + int(rng.integers(0, 1100)))
        events.append(ClinicalEvent(person_id, spec.concept_id, spec.domain, day))
    events.sort(key=lambda e: (e.event_date, e.concept_id))
    return events


def random_dod_events(rng: np.random.Generator, dod_registry, max_events=10, person_id=1):
    """Random delivery events for one person from the shipped concept set."""
    specs = list(dod_registry)
    n = int(rng.integers(0, max_events + 1))
    base = date(2018, 6, 1).toordinal()
    events = []
    for _ in range(n):
        spec = specs[int(rng.integers(0, len(specs)))]
        day = date.fromordinal(base + int(rng.integers(0, 1100)))
        events.append(ClinicalEvent(person_id, spec.concept_id, spec.domain, day))
    events.sort(key=lambda e: (e.event_date, e.concept_id))
    return events
