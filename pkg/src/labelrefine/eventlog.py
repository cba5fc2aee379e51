"""Sensor event logs: ingestion, trace construction and relabeling.

Events are immutable records.  A log is built from a flat event set by an
event partitioning key (by default address x calendar day), and labels are
changed only through relabeling functions, i.e. plain callables mapping an
:class:`Event` to a new label.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence, TextIO

__all__ = [
    "CsvSchema",
    "Event",
    "EventLog",
    "EventLogError",
    "ParseError",
    "SchemaError",
    "Trace",
    "day_key",
    "hourfloat",
    "hourfloat_radians",
    "is_refinement",
    "parse_csv",
    "partition",
    "relabel",
    "write_csv",
]


class EventLogError(Exception):
    pass


class SchemaError(EventLogError):
    pass


class ParseError(EventLogError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class Event:
    """A single sensor event.

    ``label`` is the activity label used by discovery; it starts out as the
    sensor name.  The raw sensor attributes stay available for relabeling.
    """

    id: int
    timestamp: datetime
    label: str
    sensor: str
    value: str | None = None
    address: str | None = None

    def attributes(self) -> tuple:
        return (self.label, self.sensor, self.value, self.address, self.timestamp)


@dataclass(frozen=True)
class Trace:
    case_id: Hashable
    events: tuple[Event, ...]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    alphabet: frozenset[str] = field(init=False)

    def __post_init__(self):
        seen: set[int] = set()
        labels = set()
        for trace in self.traces:
            for e in trace.events:
                if e.id in seen:
                    raise EventLogError(f"duplicate event id {e.id}")
                seen.add(e.id)
                labels.add(e.label)
        object.__setattr__(self, "alphabet", frozenset(labels))

    @classmethod
    def from_events(cls, events: Iterable[Event], key: Callable[[Event], Hashable] | None = None) -> "EventLog":
        return cls(tuple(partition(events, key or day_key)))

    def __len__(self) -> int:
        return len(self.traces)

    def events(self) -> Iterator[Event]:
        for trace in self.traces:
            yield from trace.events

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    def events_with_label(self, label: str) -> list[Event]:
        """Events carrying ``label``, ordered by event id."""
        return sorted((e for e in self.events() if e.label == label), key=lambda e: e.id)

    def label_counts(self) -> dict[str, int]:
        counts: dict[str, int] = defaultdict(int)
        for e in self.events():
            counts[e.label] += 1
        return dict(counts)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for CSV logs.  Defaults follow the layout of a typical
    smart-home sensor export (US-style dates)."""

    timestamp: str = "Timestamp"
    sensor: str = "Sensor"
    value: str | None = "Sensor value"
    address: str | None = "Address"
    timestamp_format: str = "%m/%d/%Y %H:%M:%S"
    label: str | None = "label"
    case_id: str | None = "case_id"
    delimiter: str = ","


def hourfloat(ts: datetime) -> float:
    return ts.hour + ts.minute / 60.0 + (ts.second + ts.microsecond / 1e6) / 3600.0


def hourfloat_radians(ts: datetime) -> tuple[float, float]:
    """Time of day as (hours in [0, 24), angle in [0, 2*pi))."""
    h = hourfloat(ts)
    return h, h * math.pi / 12.0


def day_key(e: Event) -> tuple:
    """Default partitioning: one case per address and calendar day."""
    return (e.address, e.timestamp.date().isoformat())


def _sort_key(e: Event):
    return (e.timestamp, e.id)


def partition(events: Iterable[Event], key: Callable[[Event], Hashable]) -> list[Trace]:
    """Group events into traces by ``key``.

    Traces are returned in order of their first event; events within a trace
    are ordered by timestamp, with equal timestamps ordered by ascending id.
    """
    groups: dict[Hashable, list[Event]] = {}
    for e in events:
        groups.setdefault(key(e), []).append(e)
    traces = [Trace(k, tuple(sorted(v, key=_sort_key))) for k, v in groups.items()]
    traces.sort(key=lambda t: _sort_key(t.events[0]))
    return traces


def relabel(log: EventLog, fn: Callable[[Event], str]) -> EventLog:
    traces = []
    for t in log.traces:
        traces.append(Trace(t.case_id, tuple(replace(e, label=fn(e)) for e in t.events)))
    return EventLog(tuple(traces))


def is_refinement(l1: Callable[[Event], Hashable], l2: Callable[[Event], Hashable], events: Iterable[Event]) -> bool:
    """True iff l1(e1) == l1(e2) implies l2(e1) == l2(e2) on ``events``.

    Equivalently, every block of the partition induced by ``l1`` maps to a
    single ``l2`` value.
    """
    image: dict[Hashable, Hashable] = {}
    for e in events:
        a, b = l1(e), l2(e)
        if a in image:
            if image[a] != b:
                return False
        else:
            image[a] = b
    return True


def _column(header: Sequence[str], name: str | None, mandatory: bool) -> int | None:
    if name is None:
        return None
    try:
        return list(header).index(name)
    except ValueError:
        if mandatory:
            raise SchemaError(f"missing mandatory column {name!r}") from None
        return None


def parse_csv(stream: TextIO | str, schema: CsvSchema = CsvSchema()) -> list[Event]:
    """Read a sensor CSV into an event set.

    Events receive fresh sequential ids starting at 1 in row order.  If the
    file carries a label column (as written by :func:`write_csv`) it is used
    as the event label, otherwise the sensor name is.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream, delimiter=schema.delimiter, skipinitialspace=True)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty input, no header row") from None
    i_ts = _column(header, schema.timestamp, True)
    i_sensor = _column(header, schema.sensor, True)
    i_value = _column(header, schema.value, False)
    i_addr = _column(header, schema.address, False)
    i_label = _column(header, schema.label, False)

    events = []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ParseError(rowno, f"expected {len(header)} fields, got {len(row)}")
        raw_ts = row[i_ts].strip()
        try:
            ts = datetime.strptime(raw_ts, schema.timestamp_format)
        except ValueError as exc:
            raise ParseError(rowno, f"bad timestamp {raw_ts!r}: {exc}") from None
        sensor = row[i_sensor].strip()
        label = row[i_label].strip() if i_label is not None else sensor
        events.append(
            Event(
                id=len(events) + 1,
                timestamp=ts,
                label=label,
                sensor=sensor,
                value=row[i_value].strip() if i_value is not None else None,
                address=row[i_addr].strip() if i_addr is not None else None,
            )
        )
    return events


def case_id_key(case_ids: Mapping[int, str]) -> Callable[[Event], Hashable]:
    return lambda e: case_ids[e.id]


def read_csv_log(stream: TextIO | str, schema: CsvSchema = CsvSchema()) -> EventLog:
    """Parse and partition in one go.

    Uses the ``case_id`` column when present, the default day key otherwise.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    text = stream.read()
    events = parse_csv(io.StringIO(text), schema)
    rows = list(csv.reader(io.StringIO(text), delimiter=schema.delimiter, skipinitialspace=True))
    header = [h.strip() for h in rows[0]]
    i_case = _column(header, schema.case_id, False)
    if i_case is None:
        return EventLog.from_events(events)
    data = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    ids = {e.id: data[e.id - 1][i_case].strip() for e in events}
    return EventLog.from_events(events, case_id_key(ids))


def _case_str(case_id: Hashable) -> str:
    if isinstance(case_id, tuple):
        return "|".join("" if c is None else str(c) for c in case_id)
    return str(case_id)


def write_csv(log: EventLog, stream: TextIO, schema: CsvSchema = CsvSchema()) -> None:
    """Write a log in the input schema plus ``case_id`` and label columns.

    Rows are ordered by event id so an unrefined log round-trips row for row.
    """
    cols = [schema.timestamp]
    if schema.address:
        cols.append(schema.address)
    cols.append(schema.sensor)
    if schema.value:
        cols.append(schema.value)
    cols += [schema.case_id or "case_id", schema.label or "label"]
    w = csv.writer(stream, delimiter=schema.delimiter, lineterminator="\n")
    w.writerow(cols)
    rows = []
    for t in log.traces:
        for e in t.events:
            rows.append((e.id, e, _case_str(t.case_id)))
    for _, e, case in sorted(rows, key=lambda r: r[0]):
        row = [e.timestamp.strftime(schema.timestamp_format)]
        if schema.address:
            row.append(e.address or "")
        row.append(e.sensor)
        if schema.value:
            row.append(e.value or "")
        row += [case, e.label]
        w.writerow(row)
