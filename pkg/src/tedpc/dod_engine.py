"""Delivery-date inference from delivery-indicating clinical events.

Delivery events for one birth concentrate within days of the true delivery,
so clustering here runs on raw event dates. Procedure-domain records are the
most trustworthy, then conditions, then observations; within a rank the
latest record wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Iterable

from .concept_registry import DODRegistry
from .errors import InvariantError
from .ga_engine import SEPARATION_WINDOW_DAYS
from .ingestion import ClinicalEvent


@dataclass(frozen=True)
class DeliveryRecord:
    """One inferred delivery date, anchored by its best event."""

    person_id: int
    dod: date
    anchor_concept_id: int
    domain_rank: int
    cluster_size: int


def infer_delivery_dates(
    events: Iterable[ClinicalEvent],
    registry: DODRegistry,
    window_days: int = SEPARATION_WINDOW_DAYS,
) -> list[DeliveryRecord]:
    """Collapse one person's delivery events into one date per gestation.

    Iteratively selects the best remaining event (domain rank, then latest
    event date, then lowest concept id), emits its date, and removes every
    remaining event dated within ±window_days (inclusive) of it. Events whose
    concept is not in the registry are ignored. Result is sorted latest first.
    """
    pool = [(e, registry.rank_of(e.concept_id)) for e in events if e.concept_id in registry]
    if not pool:
        return []
    person_id = pool[0][0].person_id
    if any(e.person_id != person_id for e, _ in pool):
        raise InvariantError("events for more than one person in one inference call")
    n = len(pool)
    order = sorted(
        range(n),
        key=lambda i: (pool[i][1], -pool[i][0].event_date.toordinal(), pool[i][0].concept_id),
    )
    date_ord = [e.event_date.toordinal() for e, _ in pool]
    alive = bytearray([1]) * n
    results = []
    for i in order:
        if not alive[i]:
            continue
        anchor, rank = pool[i]
        anchor_ord = date_ord[i]
        size = 0
        for j in range(n):
            if alive[j] and abs(date_ord[j] - anchor_ord) <= window_days:
                alive[j] = 0
                size += 1
        results.append(DeliveryRecord(person_id, anchor.event_date, anchor.concept_id, rank, size))
    results.sort(key=lambda r: r.dod, reverse=True)
    return results
