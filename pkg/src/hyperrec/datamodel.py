"""Interaction-log data model: ingestion, per-user histories, context bucketing.

Logs arrive as CSV (header ``user_id,item_id,timestamp[,ctx_*...]``) or JSONL
(one object per line with keys ``user_id``, ``item_id``, ``timestamp``,
``context``). Timestamps are integer seconds since the epoch. Everything here
is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import EmptyLog, InputError, MalformedRow, UnknownUser

TIME_OF_DAY_VALUES = ("morning", "afternoon", "evening", "night")
DAY_OF_WEEK_VALUES = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

SECONDS_PER_DAY = 86400
# Epoch day zero (1970-01-01) was a Thursday.
_EPOCH_WEEKDAY = DAY_OF_WEEK_VALUES.index("thu")


class BucketKind(str, Enum):
    TIME_OF_DAY = "time_of_day"
    DAY_OF_WEEK = "day_of_week"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ContextBucket:
    """A discrete context value an event falls into (e.g. time-of-day=morning)."""

    kind: BucketKind
    value: str
    key: str | None = None  # context key, only for CUSTOM buckets

    def __post_init__(self):
        if self.kind is BucketKind.TIME_OF_DAY and self.value not in TIME_OF_DAY_VALUES:
            raise ValueError(f"bad time-of-day bucket value {self.value!r}")
        if self.kind is BucketKind.DAY_OF_WEEK and self.value not in DAY_OF_WEEK_VALUES:
            raise ValueError(f"bad day-of-week bucket value {self.value!r}")
        if self.kind is BucketKind.CUSTOM and not self.key:
            raise ValueError("custom buckets require a context key")
        if self.kind is not BucketKind.CUSTOM and self.key is not None:
            raise ValueError("key is only valid for custom buckets")

    def label(self) -> str:
        return self.value if self.key is None else f"{self.key}={self.value}"


@dataclass(frozen=True)
class Interaction:
    """One timestamped (user, item) event with optional context metadata."""

    user_id: str
    item_id: str
    timestamp: int
    context: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if not isinstance(self.timestamp, int) or isinstance(self.timestamp, bool):
            raise ValueError("timestamp must be an integer")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        for k, v in self.context.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ValueError("context keys and values must be strings")

    def to_json(self) -> str:
        obj = {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "timestamp": self.timestamp,
            "context": dict(sorted(self.context.items())),
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ItemSequence:
    """A user's interaction history as parallel (item, timestamp) lists."""

    user_id: str
    items: tuple[str, ...]
    times: tuple[int, ...]

    def __post_init__(self):
        if len(self.items) != len(self.times):
            raise ValueError("items and times must have equal length")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class UserGroupMap:
    """Optional user -> group assignment used for group-scope rule mining."""

    assignments: Mapping[str, str] = field(default_factory=dict)

    def group_of(self, user_id: str) -> str | None:
        return self.assignments.get(user_id)

    def members(self, group_id: str) -> tuple[str, ...]:
        return tuple(sorted(u for u, g in self.assignments.items() if g == group_id))

    def group_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.assignments.values())))

    def validate_against(self, log: "EventLog") -> None:
        missing = sorted(set(self.assignments) - log.users)
        if missing:
            raise InputError(f"group map assigns users absent from the log: {missing}")


class EventLog:
    """Immutable interaction log, globally sorted by (user_id, timestamp).

    Ties in timestamp keep input order (stable sort), so per-user order is
    reproducible from the raw file.
    """

    __slots__ = ("interactions", "catalog", "users")

    def __init__(self, interactions: Iterable[Interaction]):
        rows = sorted(interactions, key=lambda r: (r.user_id, r.timestamp))
        if not rows:
            raise EmptyLog("log contains no interactions")
        self.interactions: tuple[Interaction, ...] = tuple(rows)
        self.catalog: frozenset[str] = frozenset(r.item_id for r in rows)
        self.users: frozenset[str] = frozenset(r.user_id for r in rows)

    def __len__(self) -> int:
        return len(self.interactions)

    def restricted_to(self, users: Iterable[str]) -> "EventLog":
        keep = set(users)
        return EventLog(r for r in self.interactions if r.user_id in keep)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.interactions)

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        return cls(_parse_jsonl_lines(text.splitlines()))


def _parse_context_obj(raw, line_no: int) -> dict[str, str]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise MalformedRow(line_no, "context must be an object")
    out = {}
    for k, v in raw.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise MalformedRow(line_no, "context keys and values must be strings")
        out[k] = v
    return out


def _parse_jsonl_lines(lines: Iterable[str]) -> list[Interaction]:
    allowed = {"user_id", "item_id", "timestamp", "context"}
    rows = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise MalformedRow(line_no, "expected a JSON object")
        extra = set(obj) - allowed
        if extra:
            raise MalformedRow(line_no, f"unknown keys: {sorted(extra)}")
        missing = {"user_id", "item_id", "timestamp"} - set(obj)
        if missing:
            raise MalformedRow(line_no, f"missing keys: {sorted(missing)}")
        ctx = _parse_context_obj(obj.get("context"), line_no)
        try:
            rows.append(
                Interaction(
                    user_id=obj["user_id"],
                    item_id=obj["item_id"],
                    timestamp=obj["timestamp"],
                    context=ctx,
                )
            )
        except (TypeError, ValueError) as exc:
            raise MalformedRow(line_no, str(exc)) from exc
    return rows


def _parse_csv_lines(lines: Iterable[str]) -> list[Interaction]:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyLog("empty file") from None
    if header[:3] != ["user_id", "item_id", "timestamp"]:
        raise MalformedRow(1, "header must start with user_id,item_id,timestamp")
    ctx_keys = []
    for col in header[3:]:
        if not col.startswith("ctx_") or len(col) <= 4:
            raise MalformedRow(1, f"extra columns must be named ctx_<key>, got {col!r}")
        ctx_keys.append(col[4:])
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
        try:
            ts = int(row[2])
        except ValueError:
            raise MalformedRow(line_no, f"timestamp {row[2]!r} is not an integer") from None
        ctx = {k: v for k, v in zip(ctx_keys, row[3:]) if v != ""}
        try:
            rows.append(Interaction(user_id=row[0], item_id=row[1], timestamp=ts, context=ctx))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from exc
    return rows


def ingest_log(path: str | Path, format: str = "csv") -> EventLog:
    """Parse a CSV or JSONL interaction log into an EventLog.

    Rows with unsorted timestamps are sorted, not rejected. Malformed rows
    raise MalformedRow with the offending line number; an empty file raises
    EmptyLog.
    """
    path = Path(path)
    fmt = format.lower()
    if fmt not in ("csv", "jsonl"):
        raise InputError(f"unknown log format {format!r} (expected csv or jsonl)")
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"log file not found: {path}") from None
    lines = text.splitlines()
    rows = _parse_csv_lines(lines) if fmt == "csv" else _parse_jsonl_lines(lines)
    if not rows:
        raise EmptyLog(f"no interactions in {path}")
    return EventLog(rows)


def user_history(log: EventLog, user_id: str) -> ItemSequence:
    """The user's interactions in timestamp order, ties kept in input order."""
    if user_id not in log.users:
        raise UnknownUser(f"unknown user {user_id!r}")
    items = []
    times = []
    for r in log.interactions:
        if r.user_id == user_id:
            items.append(r.item_id)
            times.append(r.timestamp)
    return ItemSequence(user_id=user_id, items=tuple(items), times=tuple(times))


def bucketize(timestamp: int, kind: BucketKind, tz_offset: int = 0) -> ContextBucket:
    """Map a timestamp onto its time-of-day or day-of-week bucket.

    Local time is ``timestamp + tz_offset``. Time-of-day boundaries:
    morning [05:00,12:00), afternoon [12:00,17:00), evening [17:00,22:00),
    night [22:00,05:00).
    """
    local = timestamp + tz_offset
    if kind is BucketKind.TIME_OF_DAY:
        hour = (local % SECONDS_PER_DAY) // 3600
        if 5 <= hour < 12:
            value = "morning"
        elif 12 <= hour < 17:
            value = "afternoon"
        elif 17 <= hour < 22:
            value = "evening"
        else:
            value = "night"
        return ContextBucket(BucketKind.TIME_OF_DAY, value)
    if kind is BucketKind.DAY_OF_WEEK:
        days = local // SECONDS_PER_DAY
        idx = (days + _EPOCH_WEEKDAY) % 7
        return ContextBucket(BucketKind.DAY_OF_WEEK, DAY_OF_WEEK_VALUES[idx])
    raise ValueError(f"bucketize does not support kind {kind!r}")
