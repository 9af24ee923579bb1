"""Event records, the event log container, and JSON-lines (de)serialization."""
from __future__ import annotations

import enum
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

FIELD_ORDER = ("ts", "kind", "actor", "site", "content_ref", "text")


class EventKind(str, enum.Enum):
    JOURNAL_UPDATE = "journal_update"
    REACTION = "reaction"
    COMMENT = "comment"
    GUESTBOOK = "guestbook"
    VISIT = "visit"
    FOLLOW = "follow"


INTERACTION_KINDS = frozenset({EventKind.REACTION, EventKind.COMMENT, EventKind.GUESTBOOK})
ACTIVITY_KINDS = frozenset(INTERACTION_KINDS | {EventKind.JOURNAL_UPDATE})


class EventLogError(ValueError):
    """Raised for malformed event files or invalid records."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class EventRecord:
    timestamp_ms: int
    kind: EventKind
    actor: str
    site: str
    content_ref: Optional[str] = None
    text: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.kind, EventKind):
            object.__setattr__(self, "kind", EventKind(self.kind))
        if isinstance(self.timestamp_ms, bool) or not isinstance(self.timestamp_ms, int):
            raise EventLogError(f"timestamp must be an integer, got {self.timestamp_ms!r}")
        if self.timestamp_ms < 0:
            raise EventLogError(f"negative timestamp {self.timestamp_ms}")
        if not self.actor or not self.site:
            raise EventLogError("actor and site must be nonempty")
        if self.text is not None and self.kind is not EventKind.JOURNAL_UPDATE:
            raise EventLogError(f"text is only allowed on journal_update records, not {self.kind.value}")

    def to_json(self) -> str:
        row = {
            "ts": self.timestamp_ms,
            "kind": self.kind.value,
            "actor": self.actor,
            "site": self.site,
            "content_ref": self.content_ref,
            "text": self.text,
        }
        return json.dumps(row, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_mapping(cls, row: dict) -> "EventRecord":
        try:
            kind = EventKind(row["kind"])
        except ValueError:
            raise EventLogError(f"unknown event kind {row['kind']!r}") from None
        return cls(
            timestamp_ms=row["ts"],
            kind=kind,
            actor=row["actor"],
            site=row["site"],
            content_ref=row.get("content_ref"),
            text=row.get("text"),
        )


@dataclass(frozen=True)
class AuthorEntry:
    author: str
    first_update_ts: int
    update_timestamps: tuple


@dataclass
class EventLog:
    """Time-sorted, immutable-by-convention sequence of records.

    ``authorship`` maps each site to its authors ordered by first update;
    ``n_reordered`` counts records that arrived out of timestamp order.
    """

    records: tuple = ()
    n_reordered: int = 0
    authorship: dict = field(init=False, repr=False)

    def __post_init__(self):
        records = tuple(self.records)
        if any(records[i].timestamp_ms > records[i + 1].timestamp_ms for i in range(len(records) - 1)):
            records = tuple(sorted(records, key=lambda r: r.timestamp_ms))  # stable
        self.records = records
        self.authorship = _build_authorship(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def authors_of(self, site, t=None):
        """Authors of ``site`` with a first update strictly before ``t`` (all if ``t`` is None)."""
        entries = self.authorship.get(site, ())
        return [e.author for e in entries if t is None or e.first_update_ts < t]

    def truncate(self, t: int) -> "EventLog":
        """Log restricted to records strictly before ``t``."""
        return EventLog([r for r in self.records if r.timestamp_ms < t])

    @property
    def start_ms(self):
        return self.records[0].timestamp_ms if self.records else 0

    @property
    def end_ms(self):
        return self.records[-1].timestamp_ms if self.records else 0


def _build_authorship(records) -> dict:
    updates: dict = {}
    for r in records:
        if r.kind is EventKind.JOURNAL_UPDATE:
            updates.setdefault(r.site, {}).setdefault(r.actor, []).append(r.timestamp_ms)
    index = {}
    for site, by_author in updates.items():
        entries = [AuthorEntry(a, ts[0], tuple(ts)) for a, ts in by_author.items()]
        entries.sort(key=lambda e: (e.first_update_ts, e.author))
        index[site] = tuple(entries)
    return index


def parse_records(lines: Iterable[str]) -> EventLog:
    records = []
    n_reordered = 0
    last_ts = None
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventLogError(f"invalid JSON ({exc.msg})", line=lineno) from None
        if not isinstance(row, dict):
            raise EventLogError("record must be a JSON object", line=lineno)
        missing = [k for k in ("ts", "kind", "actor", "site") if k not in row]
        if missing:
            raise EventLogError(f"missing field(s) {', '.join(missing)}", line=lineno)
        try:
            rec = EventRecord.from_mapping(row)
        except EventLogError as exc:
            raise EventLogError(str(exc), line=lineno) from None
        except (TypeError, ValueError) as exc:
            raise EventLogError(str(exc), line=lineno) from None
        if last_ts is not None and rec.timestamp_ms < last_ts:
            n_reordered += 1
        last_ts = rec.timestamp_ms if last_ts is None else max(last_ts, rec.timestamp_ms)
        records.append(rec)
    if n_reordered:
        logger.warning("%d record(s) out of timestamp order; sorted on load", n_reordered)
    return EventLog(records, n_reordered=n_reordered)


def parse_event_log(path) -> EventLog:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_records(fh)


def write_event_log(log: EventLog, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for rec in log.records:
            fh.write(rec.to_json())
            fh.write("\n")
    os.replace(tmp, path)
