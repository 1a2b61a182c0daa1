"""Run configuration with flags > config file > defaults precedence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path

from .concept_registry import default_dod_concepts_path, default_ga_concepts_path
from .episode_builder import (
    COHORT_WINDOW,
    MATCH_MAX_DAYS,
    MATCH_MIN_DAYS,
    MAX_AGE_AT_DELIVERY,
    MIN_AGE_AT_DELIVERY,
)
from .errors import ConfigError
from .ga_engine import CONFLICT_WINDOW_DAYS, SEPARATION_WINDOW_DAYS
from .analytics import PANDEMIC_CUTOFF, SUPPRESSION_THRESHOLD

ENV_DATA_DIR = "TEDPC_DATA_DIR"

_DATE_FIELDS = {"pandemic_cutoff", "cohort_start", "cohort_end"}
_PATH_FIELDS = {
    "persons_path",
    "events_path",
    "ga_concepts_path",
    "dod_concepts_path",
    "index_events_path",
    "episodes_path",
    "out_dir",
}


def resolve_input_path(path: Path | str | None) -> Path | None:
    """Resolve an input path, falling back to $TEDPC_DATA_DIR for relative names."""
    if path is None:
        return None
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    base = os.environ.get(ENV_DATA_DIR)
    if base:
        candidate = Path(base) / path
        if candidate.exists():
            return candidate
    return path


@dataclass
class RunConfig:
    """Paths and engine constants for one pipeline run."""

    persons_path: Path | None = None
    events_path: Path | None = None
    ga_concepts_path: Path = field(default_factory=default_ga_concepts_path)
    dod_concepts_path: Path = field(default_factory=default_dod_concepts_path)
    index_events_path: Path | None = None
    episodes_path: Path | None = None
    out_dir: Path = Path("out")
    window_days: int = SEPARATION_WINDOW_DAYS
    match_min_days: int = MATCH_MIN_DAYS
    match_max_days: int = MATCH_MAX_DAYS
    conflict_days: int = CONFLICT_WINDOW_DAYS
    suppression_threshold: int = SUPPRESSION_THRESHOLD
    pandemic_cutoff: date = PANDEMIC_CUTOFF
    cohort_start: date = COHORT_WINDOW[0]
    cohort_end: date = COHORT_WINDOW[1]
    min_age: int = MIN_AGE_AT_DELIVERY
    max_age: int = MAX_AGE_AT_DELIVERY
    apply_filters: bool = True
    emit_cohorts: bool = False
    threads: int = 1
    seed: int = 0

    def validate(self) -> None:
        positive = {
            "window_days": self.window_days,
            "match_min_days": self.match_min_days,
            "match_max_days": self.match_max_days,
            "conflict_days": self.conflict_days,
            "threads": self.threads,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.suppression_threshold < 0:
            raise ConfigError("suppression_threshold must be non-negative")
        if self.match_min_days >= self.match_max_days:
            raise ConfigError(
                f"match bounds must satisfy min < max, got [{self.match_min_days}, {self.match_max_days}]"
            )
        if self.cohort_start > self.cohort_end:
            raise ConfigError("cohort_start must not be after cohort_end")
        if not 0 <= self.min_age <= self.max_age:
            raise ConfigError("age bounds must satisfy 0 <= min <= max")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_json(self) -> str:
        payload = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, date):
                value = value.isoformat()
            payload[f.name] = value
        return json.dumps(payload, indent=2, sort_keys=True)


def build_config(config_file: Path | str | None, overrides: dict) -> RunConfig:
    """Assemble a RunConfig: defaults, then config-file values, then flags."""
    values: dict = {}
    if config_file is not None:
        with open(config_file, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_file}: invalid JSON: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{config_file}: unknown config keys {sorted(unknown)}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in list(values):
        if key in _DATE_FIELDS and isinstance(values[key], str):
            try:
                values[key] = date.fromisoformat(values[key])
            except ValueError as exc:
                raise ConfigError(f"bad date for {key}: {exc}") from None
        elif key in _PATH_FIELDS and values[key] is not None:
            values[key] = resolve_input_path(values[key])
    config = RunConfig(**values)
    config.validate()
    return config
