"""On-disk store: the serialized log plus derived co-occurrence tables.

Layout of a store directory:

    events.jsonl   canonical JSONL of the ingested log
    meta.json      version tag and build parameters
    derived.json   unigram counts, co-occurrence pairs, total event count

Derived tables are reused on load when the version tag matches, otherwise
rebuilt from the log.
"""

from __future__ import annotations

import json
from pathlib import Path

from .datamodel import EventLog
from .declarative import ChunkStore
from .errors import InputError

STORE_VERSION = 1


def save_store(directory: str | Path, log: EventLog, store: ChunkStore) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "events.jsonl").write_text(log.to_jsonl(), encoding="utf-8")
    meta = {
        "version": STORE_VERSION,
        "cooc_window": store.cooc_window,
        "time_mode": store.time_mode,
        "users": len(log.users),
        "items": len(log.catalog),
        "interactions": len(log),
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    derived = {
        "total_events": store.total_events,
        "unigram": dict(sorted(store.unigram.items())),
        "cooc": [[a, b, c] for (a, b), c in sorted(store.cooc.items())],
    }
    (directory / "derived.json").write_text(
        json.dumps(derived, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_store(directory: str | Path) -> tuple[EventLog, ChunkStore]:
    directory = Path(directory)
    events_path = directory / "events.jsonl"
    meta_path = directory / "meta.json"
    if not events_path.exists() or not meta_path.exists():
        raise InputError(f"not a store directory: {directory}")
    log = EventLog.from_jsonl(events_path.read_text(encoding="utf-8"))
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    cooc_window = int(meta["cooc_window"])
    time_mode = meta["time_mode"]

    derived_path = directory / "derived.json"
    if meta.get("version") == STORE_VERSION and derived_path.exists():
        derived = json.loads(derived_path.read_text(encoding="utf-8"))
        if derived.get("total_events") == len(log):
            cooc = {(a, b): int(c) for a, b, c in derived["cooc"]}
            return log, ChunkStore.build(log, cooc_window=cooc_window,
                                         time_mode=time_mode, precomputed_cooc=cooc)
    # Version mismatch or stale tables: rebuild everything from the log.
    return log, ChunkStore.build(log, cooc_window=cooc_window, time_mode=time_mode)
