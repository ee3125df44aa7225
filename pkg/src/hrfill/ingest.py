"""Raw sensor-file parsing and alignment onto a uniform 1 Hz grid.

Three channel CSVs are supported, one file per channel per participant:

    accel: timestamp_ms,x,y,z      (acceleration in g)
    gps:   timestamp_ms,lat,lon    (decimal degrees)
    hr:    timestamp_ms,bpm        (beats per minute)

``align_streams`` joins them on an integer-second grid: the 1 Hz channels
(accel, hr) map to their nearest grid second (an exact half-second rounds
toward the earlier second, and when two samples land on the same second the
earlier one wins); GPS fixes are carried forward for up to 60 s. Absent
values are stored as NaN.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

BPM_MIN = 20.0
BPM_MAX = 250.0
GPS_FILL_HORIZON_S = 60

CHANNEL_COLUMNS = {
    "accel": ("x", "y", "z"),
    "gps": ("lat", "lon"),
    "hr": ("bpm",),
}


@dataclass(frozen=True)
class SensorRecord:
    """One timestamped reading from one channel."""

    timestamp_ms: int
    channel: str
    values: tuple[float, ...]


class SensorRecords:
    """An ordered collection of same-channel records, stored column-wise.

    Streams run to millions of rows, so values live in numpy arrays rather
    than per-record objects; indexing materializes a SensorRecord view.
    """

    def __init__(self, channel: str, timestamps_ms: np.ndarray, values: np.ndarray):
        if channel not in CHANNEL_COLUMNS:
            raise ValueError(f"unknown channel {channel!r}")
        n_cols = len(CHANNEL_COLUMNS[channel])
        timestamps_ms = np.asarray(timestamps_ms, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64).reshape(len(timestamps_ms), n_cols)
        order = np.argsort(timestamps_ms, kind="stable")
        self.channel = channel
        self.timestamps_ms = timestamps_ms[order]
        self.values = values[order]

    @classmethod
    def empty(cls, channel: str) -> "SensorRecords":
        n_cols = len(CHANNEL_COLUMNS[channel])
        return cls(channel, np.empty(0, dtype=np.int64), np.empty((0, n_cols)))

    def __len__(self) -> int:
        return len(self.timestamps_ms)

    def __getitem__(self, i: int) -> SensorRecord:
        return SensorRecord(
            int(self.timestamps_ms[i]), self.channel, tuple(float(v) for v in self.values[i])
        )

    def __iter__(self) -> Iterator[SensorRecord]:
        return (self[i] for i in range(len(self)))


@dataclass
class ParseResult:
    """Parsed records plus a malformed-row tally (dirty rows are reported, not hidden)."""

    records: SensorRecords
    total_rows: int
    malformed: int
    messages: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class AlignedFrame:
    """One second of the unified grid; None marks an absent channel."""

    timestamp: int
    participant_id: str
    accel: Optional[tuple[float, float, float]]
    gps: Optional[tuple[float, float]]
    hr: Optional[float]


class AlignedStream:
    """A participant's 1 Hz unified grid, one column array per channel.

    Rows cover every second from ``start_sec`` to ``start_sec + len - 1``;
    NaN marks an absent value.
    """

    def __init__(
        self,
        participant_id: str,
        start_sec: int,
        accel: np.ndarray,
        gps: np.ndarray,
        hr: np.ndarray,
    ):
        n = len(hr)
        if accel.shape != (n, 3) or gps.shape != (n, 2):
            raise ValueError("channel arrays disagree on grid length")
        self.participant_id = participant_id
        self.start_sec = int(start_sec)
        self.accel = np.asarray(accel, dtype=np.float64)
        self.gps = np.asarray(gps, dtype=np.float64)
        self.hr = np.asarray(hr, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.hr)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_sec + np.arange(len(self), dtype=np.int64)

    @property
    def accel_present(self) -> np.ndarray:
        return ~np.isnan(self.accel).any(axis=1)

    @property
    def gps_present(self) -> np.ndarray:
        return ~np.isnan(self.gps).any(axis=1)

    @property
    def hr_present(self) -> np.ndarray:
        return ~np.isnan(self.hr)

    def frame(self, i: int) -> AlignedFrame:
        accel = tuple(float(v) for v in self.accel[i]) if self.accel_present[i] else None
        gps = tuple(float(v) for v in self.gps[i]) if self.gps_present[i] else None
        hr = float(self.hr[i]) if self.hr_present[i] else None
        return AlignedFrame(int(self.start_sec + i), self.participant_id, accel, gps, hr)

    def copy(self) -> "AlignedStream":
        return AlignedStream(
            self.participant_id, self.start_sec, self.accel.copy(), self.gps.copy(), self.hr.copy()
        )


@dataclass
class GapMask:
    """Disjoint, sorted, inclusive second intervals where hr is absent."""

    intervals: list[tuple[int, int]]

    def total_seconds(self) -> int:
        return sum(e - s + 1 for s, e in self.intervals)

    def seconds(self) -> np.ndarray:
        if not self.intervals:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([np.arange(s, e + 1, dtype=np.int64) for s, e in self.intervals])

    @classmethod
    def from_seconds(cls, seconds: np.ndarray) -> "GapMask":
        """Collapse a set of seconds into maximal inclusive intervals."""
        seconds = np.unique(np.asarray(seconds, dtype=np.int64))
        if len(seconds) == 0:
            return cls(intervals=[])
        breaks = np.flatnonzero(np.diff(seconds) > 1)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [len(seconds) - 1]))
        return cls(intervals=[(int(seconds[s]), int(seconds[e])) for s, e in zip(starts, ends)])


def _validate_values(channel: str, vals: Sequence[float]) -> Optional[str]:
    if any(not math.isfinite(v) for v in vals):
        return "non-finite value"
    if channel == "hr":
        if not (BPM_MIN <= vals[0] <= BPM_MAX):
            return f"bpm {vals[0]} outside [{BPM_MIN:g}, {BPM_MAX:g}]"
    elif channel == "gps":
        if not (-90.0 <= vals[0] <= 90.0):
            return f"latitude {vals[0]} outside [-90, 90]"
        if not (-180.0 <= vals[1] <= 180.0):
            return f"longitude {vals[1]} outside [-180, 180]"
    return None


def parse_channel_file(path: str | Path, channel: str, max_messages: int = 10) -> ParseResult:
    """Parse one channel CSV into sorted records.

    Malformed rows are counted and sampled into ``messages`` rather than
    silently dropped; more than 50% malformed rows aborts with DataError
    (it almost always means the wrong schema was given).
    """
    if channel not in CHANNEL_COLUMNS:
        raise ValueError(f"unknown channel {channel!r}")
    expected_header = ["timestamp_ms", *CHANNEL_COLUMNS[channel]]
    path = Path(path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    timestamps: list[int] = []
    values: list[tuple[float, ...]] = []
    malformed = 0
    messages: list[str] = []
    total = 0
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected_header:
            raise DataError(
                f"{path}: header {header} does not match {expected_header} for channel {channel!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            total += 1
            problem = None
            try:
                ts = int(row[0])
                vals = tuple(float(v) for v in row[1:])
                if len(vals) != len(CHANNEL_COLUMNS[channel]):
                    problem = f"expected {len(CHANNEL_COLUMNS[channel])} values, got {len(vals)}"
                else:
                    problem = _validate_values(channel, vals)
            except (ValueError, IndexError) as exc:
                problem = str(exc)
            if problem is not None:
                malformed += 1
                if len(messages) < max_messages:
                    messages.append(f"{path.name}:{lineno}: {problem}")
                continue
            timestamps.append(ts)
            values.append(vals)

    if total > 0 and malformed > total / 2:
        raise DataError(
            f"{path}: {malformed}/{total} rows malformed; file likely has the wrong schema "
            f"for channel {channel!r}"
        )
    if malformed:
        logger.warning("%s: %d of %d rows malformed", path, malformed, total)
    n_cols = len(CHANNEL_COLUMNS[channel])
    records = SensorRecords(
        channel,
        np.array(timestamps, dtype=np.int64),
        np.array(values, dtype=np.float64).reshape(len(timestamps), n_cols),
    )
    return ParseResult(records=records, total_rows=total, malformed=malformed, messages=messages)


def _grid_seconds(timestamps_ms: np.ndarray) -> np.ndarray:
    # Nearest grid second; an exact half-second rounds toward the earlier second.
    return (timestamps_ms + 499) // 1000


def _first_per_second(seconds: np.ndarray) -> np.ndarray:
    """Indices of the earliest record for each occupied second (input time-sorted)."""
    _, first = np.unique(seconds, return_index=True)
    return first


def align_streams(
    accel: SensorRecords | None,
    gps: SensorRecords | None,
    hr: SensorRecords | None,
    participant_id: str,
) -> AlignedStream:
    """Join per-channel records onto one 1 Hz grid.

    The grid spans the earliest to the latest occupied grid second over all
    channels. accel/hr occupy their nearest second; GPS fixes are carried
    forward for up to GPS_FILL_HORIZON_S seconds.
    """
    accel = accel if accel is not None else SensorRecords.empty("accel")
    gps = gps if gps is not None else SensorRecords.empty("gps")
    hr = hr if hr is not None else SensorRecords.empty("hr")
    if len(accel) == 0 and len(gps) == 0 and len(hr) == 0:
        raise DataError(f"participant {participant_id!r}: all channels empty, nothing to align")

    accel_sec = _grid_seconds(accel.timestamps_ms)
    gps_sec = _grid_seconds(gps.timestamps_ms)
    hr_sec = _grid_seconds(hr.timestamps_ms)

    occupied = [s for s in (accel_sec, gps_sec, hr_sec) if len(s)]
    start = int(min(s[0] for s in occupied))
    end = int(max(s[-1] for s in occupied))
    n = end - start + 1

    accel_grid = np.full((n, 3), np.nan)
    if len(accel_sec):
        keep = _first_per_second(accel_sec)
        accel_grid[accel_sec[keep] - start] = accel.values[keep]

    hr_grid = np.full(n, np.nan)
    if len(hr_sec):
        keep = _first_per_second(hr_sec)
        hr_grid[hr_sec[keep] - start] = hr.values[keep, 0]

    gps_grid = np.full((n, 2), np.nan)
    if len(gps_sec):
        keep = _first_per_second(gps_sec)
        fix_sec = gps_sec[keep]
        fix_val = gps.values[keep]
        grid = np.arange(start, end + 1, dtype=np.int64)
        # index of the last fix at or before each grid second
        idx = np.searchsorted(fix_sec, grid, side="right") - 1
        valid = idx >= 0
        age = np.where(valid, grid - fix_sec[np.clip(idx, 0, None)], np.iinfo(np.int64).max)
        fresh = valid & (age <= GPS_FILL_HORIZON_S)
        gps_grid[fresh] = fix_val[idx[fresh]]

    return AlignedStream(participant_id, start, accel_grid, gps_grid, hr_grid)


def detect_gaps(stream: AlignedStream) -> GapMask:
    """Maximal runs of grid seconds with absent heart rate."""
    absent = ~stream.hr_present
    if not absent.any():
        return GapMask(intervals=[])
    step = np.diff(absent.astype(np.int8))
    starts = np.flatnonzero(step == 1) + 1
    ends = np.flatnonzero(step == -1)
    if absent[0]:
        starts = np.concatenate(([0], starts))
    if absent[-1]:
        ends = np.concatenate((ends, [len(absent) - 1]))
    intervals = [
        (int(stream.start_sec + s), int(stream.start_sec + e)) for s, e in zip(starts, ends)
    ]
    return GapMask(intervals=intervals)


ALIGNED_HEADER = ["timestamp_s", "participant_id", "x", "y", "z", "lat", "lon", "bpm"]


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_aligned_csv(stream: AlignedStream, path: str | Path) -> None:
    """Write the canonical aligned CSV; absent values are empty cells."""
    ts = stream.timestamps
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ALIGNED_HEADER)
        for i in range(len(stream)):
            writer.writerow(
                [
                    int(ts[i]),
                    stream.participant_id,
                    _fmt(stream.accel[i, 0]),
                    _fmt(stream.accel[i, 1]),
                    _fmt(stream.accel[i, 2]),
                    _fmt(stream.gps[i, 0]),
                    _fmt(stream.gps[i, 1]),
                    _fmt(stream.hr[i]),
                ]
            )


def read_aligned_csv(path: str | Path) -> AlignedStream:
    """Read a canonical aligned CSV back into an AlignedStream."""
    path = Path(path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ALIGNED_HEADER:
            raise DataError(f"{path}: header {header} does not match {ALIGNED_HEADER}")
        timestamps: list[int] = []
        cells: list[list[float]] = []
        participant = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ALIGNED_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(ALIGNED_HEADER)} cells")
            timestamps.append(int(row[0]))
            if participant is None:
                participant = row[1]
            elif row[1] != participant:
                raise DataError(f"{path}:{lineno}: multiple participant ids in one file")
            cells.append([float(c) if c != "" else math.nan for c in row[2:]])
    if not timestamps:
        raise DataError(f"{path}: no data rows")
    ts = np.array(timestamps, dtype=np.int64)
    if np.any(np.diff(ts) != 1):
        raise DataError(f"{path}: timestamps are not a contiguous 1 Hz grid")
    vals = np.array(cells, dtype=np.float64)
    return AlignedStream(participant or "", int(ts[0]), vals[:, 0:3], vals[:, 3:5], vals[:, 5])
