"""Timestamped frame logs: the flow file format shared by every command.

A log is line-oriented text so that flows can be diffed, grepped and
committed next to the code that produced them:

    pmucloak framelog v1
    0.000000 out aa01011c...
    0.033366 in aa410012...
    0.066733 out raw deadbeef

Each record is ``<timestamp> <direction> [raw] <hex>``. Timestamps are
monotonic seconds kept as the exact decimal string found in the file, so
a read/write cycle is byte identical. Records not marked ``raw`` are
expected to decode as synchrophasor frames; ``raw`` is the escape hatch
for junk bytes kept for forensics (resync leftovers, fuzz inputs).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import FormatError
from .frames import CommandFrame, ConfigFrame, DataFrame, decode_frame

_MAGIC = "pmucloak framelog v1"
_DIRECTIONS = ("in", "out")
_TS_RE = re.compile(r"[0-9]+(\.[0-9]+)?\Z")
_HEX_RE = re.compile(r"(?:[0-9a-fA-F]{2})+\Z")


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class FrameRecord:
    """One logged frame. ``timestamp`` stays a string to round-trip exactly."""

    timestamp: str
    direction: str
    frame_hex: str
    raw: bool = False

    def __post_init__(self):
        if not _TS_RE.match(self.timestamp):
            raise ValueError(f"timestamp {self.timestamp!r} is not a decimal string")
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}, got {self.direction!r}")
        if not _HEX_RE.match(self.frame_hex):
            raise ValueError("frame_hex must be a non-empty even-length hex string")

    @property
    def seconds(self) -> float:
        return float(self.timestamp)

    @property
    def data(self) -> bytes:
        return bytes.fromhex(self.frame_hex)


def make_record(seconds: float, direction: str, data: bytes, raw: bool = False) -> FrameRecord:
    """Build a record from in-memory values; timestamps get microsecond text."""
    if seconds < 0:
        raise ValueError("timestamps are monotonic seconds, must be >= 0")
    return FrameRecord(f"{seconds:.6f}", direction, data.hex(), raw)


@dataclass
class FrameLog:
    """An ordered sequence of frame records."""

    records: list[FrameRecord] = field(default_factory=list)

    def append(self, record: FrameRecord) -> None:
        last = self._last_for(record.direction)
        if last is not None and record.seconds < last.seconds:
            raise ValueError(
                f"timestamp {record.timestamp} precedes the previous "
                f"{record.direction!r} record at {last.timestamp}"
            )
        self.records.append(record)

    def _last_for(self, direction: str) -> FrameRecord | None:
        for rec in reversed(self.records):
            if rec.direction == direction:
                return rec
        return None

    def by_direction(self, direction: str) -> list[FrameRecord]:
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}, got {direction!r}")
        return [r for r in self.records if r.direction == direction]

    def timestamps(self, direction: str) -> list[float]:
        return [r.seconds for r in self.by_direction(direction)]

    def frames(self, direction: str | None = None) -> list[DataFrame | CommandFrame | ConfigFrame]:
        """Decode every non-raw record; codec errors propagate."""
        records = self.records if direction is None else self.by_direction(direction)
        return [decode_frame(r.data) for r in records if not r.raw]


def from_capture(records, direction: str = "out") -> FrameLog:
    """Converter hook for external capture tooling.

    Accepts an iterable of ``(seconds, payload_bytes)`` pairs, e.g. produced
    by a pcap reader, and wraps them as a log of ``raw``-flagged records in
    one direction. Parsing capture files themselves is out of scope; callers
    strip transport headers before handing the payloads over.
    """
    log = FrameLog()
    for seconds, payload in records:
        log.append(make_record(seconds, direction, payload, raw=True))
    return log


# -- persistence ----------------------------------------------------------------

def save_framelog(log: FrameLog, path: str) -> None:
    """Write the log as versioned text; load_framelog inverts it exactly."""
    lines = [_MAGIC]
    for r in log.records:
        marker = " raw" if r.raw else ""
        lines.append(f"{r.timestamp} {r.direction}{marker} {r.frame_hex}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_framelog(path: str) -> FrameLog:
    """Read a log written by save_framelog.

    Raises:
        FormatError: wrong magic, malformed record line, or timestamps
            that go backwards within one direction.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise FormatError(f"not a frame log: expected {_MAGIC!r} on line 1")
    log = FrameLog()
    for i, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(" ")
        raw = len(parts) == 4 and parts[2] == "raw"
        if len(parts) != 3 and not raw:
            raise FormatError(f"line {i}: expected '<ts> <dir> [raw] <hex>', got {line!r}")
        try:
            record = FrameRecord(parts[0], parts[1], parts[-1], raw)
        except ValueError as exc:
            raise FormatError(f"line {i}: {exc}") from exc
        try:
            log.append(record)
        except ValueError as exc:
            raise FormatError(f"line {i}: {exc}") from exc
    return log
