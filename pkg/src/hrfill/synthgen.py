"""Synthetic cohort generator with controllable heart-rate structure and gaps.

Each participant gets a resting baseline, a sinusoidal time-of-day swing
(peak near 16:00 and trough near 04:00, shifted by a per-person chronotype
offset), activity bouts that raise both wrist motion and heart rate by a
per-person gain, and location that follows a home/work schedule. Sensors are
emitted in the raw channel-CSV schemas so generated data exercises the same
ingest path as real exports.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .ingest import CHANNEL_COLUMNS, GapMask, SensorRecords, _grid_seconds

HR_CLAMP_LO = 30.0
HR_CLAMP_HI = 220.0
BASELINE_LO_LIMIT = 40.0
BASELINE_HI_LIMIT = 100.0
CIRCADIAN_PEAK_HOUR = 16.0  # sin phase places the trough 12 h earlier

GAP_KINDS = ("random", "nightly", "battery")


@dataclass(frozen=True)
class SynthConfig:
    """Cohort-level generation parameters."""

    n_participants: int = 12
    duration: int = 604_800  # one week
    start_epoch_s: int = 1_551_398_400  # a midnight, so days tile cleanly
    hr_baseline_range: tuple[float, float] = (55.0, 85.0)
    circadian_amplitude: float = 5.0
    circadian_phase_jitter_h: float = 2.5
    activity_rate: float = 8.0
    activity_hr_gain: float = 30.0
    activity_gain_spread: float = 0.5
    noise_std: float = 1.5
    accel_noise: float = 0.6
    gps_interval_s: int = 15
    gps_jitter_deg: float = 0.0005
    timestamp_jitter_ms: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_participants < 1:
            raise ValueError(f"n_participants must be >= 1, got {self.n_participants}")
        if self.duration < 3600:
            raise ValueError(f"duration must be >= 3600, got {self.duration}")
        lo, hi = self.hr_baseline_range
        if not (BASELINE_LO_LIMIT <= lo <= hi <= BASELINE_HI_LIMIT):
            raise ValueError(
                f"hr_baseline_range must satisfy {BASELINE_LO_LIMIT} <= lo <= hi <= "
                f"{BASELINE_HI_LIMIT}, got {self.hr_baseline_range}"
            )
        for name in (
            "circadian_amplitude",
            "activity_rate",
            "activity_hr_gain",
            "noise_std",
            "accel_noise",
            "gps_jitter_deg",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.circadian_phase_jitter_h < 12.0:
            raise ValueError(
                f"circadian_phase_jitter_h must be in [0, 12), got {self.circadian_phase_jitter_h}"
            )
        if not 0.0 <= self.activity_gain_spread < 1.0:
            raise ValueError(
                f"activity_gain_spread must be in [0, 1), got {self.activity_gain_spread}"
            )
        if not 1 <= self.gps_interval_s <= self.duration:
            raise ValueError(f"gps_interval_s must be in [1, duration], got {self.gps_interval_s}")
        # Jitter past half a second would move records onto other grid seconds.
        if not 0 <= self.timestamp_jitter_ms <= 499:
            raise ValueError(
                f"timestamp_jitter_ms must be in [0, 499], got {self.timestamp_jitter_ms}"
            )

    def baselines(self) -> np.ndarray:
        """Resting rates evenly spanning the configured range, endpoints included."""
        lo, hi = self.hr_baseline_range
        return np.linspace(lo, hi, self.n_participants)


@dataclass
class SynthParticipant:
    """One participant's raw channel records plus the pre-gap truth."""

    participant_id: str
    accel: SensorRecords
    gps: SensorRecords
    hr: SensorRecords
    hr_truth: np.ndarray  # (duration,) bpm at every second, before gaps
    start_epoch_s: int
    n_clamped: int  # seconds where the bpm model left [30, 220]


def participant_id(index: int) -> str:
    return f"p{index + 1:02d}"


def _moving_average(x: np.ndarray, half_window: int) -> np.ndarray:
    """Centered moving average with exact shrunken edges."""
    c = np.concatenate(([0.0], np.cumsum(x)))
    n = len(x)
    i = np.arange(n)
    lo = np.maximum(i - half_window, 0)
    hi = np.minimum(i + half_window + 1, n)
    return (c[hi] - c[lo]) / (hi - lo)


def generate_participant(config: SynthConfig, index: int) -> SynthParticipant:
    """Generate one participant's raw sensor records.

    Deterministic in (config.seed, index): the random stream is seeded with
    that pair and consumed in a fixed order. At-rest accelerometer rows are
    exactly (0, 0, 1) so deviation features vanish at rest.
    """
    if not 0 <= index < config.n_participants:
        raise ValueError(f"index {index} outside cohort of {config.n_participants}")
    rng = np.random.default_rng([config.seed, index])
    n = config.duration
    t_abs = config.start_epoch_s + np.arange(n, dtype=np.int64)
    hod = (t_abs % 86400) / 3600.0

    # Home/work anchors. Homes sit within one 0.01-degree cell (a shared
    # neighborhood), so rounded location identifies places, not people, and a
    # pooled model cannot single out participants through their coordinates.
    home_lat = 40.0 + 0.0015 * (index % 3)
    home_lon = -105.0 - 0.0015 * (index % 4)
    work_dlat = float(rng.uniform(0.025, 0.06)) * (1.0 if index % 2 == 0 else -1.0)
    work_dlon = float(rng.uniform(0.025, 0.06)) * (1.0 if index % 3 == 0 else -1.0)

    # Person-specific dynamics: chronotype shifts the daily cycle, and the
    # heart-rate response to the same movement differs between people. Both
    # give personalized models something a pooled model must work to recover.
    j = config.circadian_phase_jitter_h
    phase_h = float(rng.uniform(-j, j)) if j > 0 else 0.0
    s = config.activity_gain_spread
    gain_mult = 1.0 + (float(rng.uniform(-s, s)) if s > 0 else 0.0)

    # Activity bouts: daytime bursts of wrist motion with raised heart rate.
    n_days = max(1, int(np.ceil(n / 86400)))
    envelope = np.zeros(n)
    n_bouts = int(rng.poisson(config.activity_rate * (n / 86400.0)))
    for _ in range(n_bouts):
        day = int(rng.integers(0, n_days))
        sec = int(rng.integers(7 * 3600, 22 * 3600))
        dur = int(rng.integers(120, 901))
        intensity = float(rng.uniform(0.6, 1.4))
        s0 = day * 86400 + sec
        if s0 >= n:
            continue
        s1 = min(s0 + dur, n)
        envelope[s0:s1] = np.maximum(envelope[s0:s1], intensity)

    x = np.zeros(n)
    y = np.zeros(n)
    z = np.ones(n)
    active = envelope > 0
    na = int(active.sum())
    if na:
        amp = config.accel_noise * envelope[active]
        x[active] = amp * rng.standard_normal(na)
        y[active] = amp * rng.standard_normal(na)
        z[active] += amp * rng.standard_normal(na)

    magnitude = np.sqrt(x * x + y * y + z * z)
    exertion = _moving_average(np.abs(magnitude - 1.0), 30)

    circadian = config.circadian_amplitude * np.sin(2.0 * np.pi * (hod - 10.0 - phase_h) / 24.0)
    baseline = float(config.baselines()[index])
    bpm = (
        baseline
        + circadian
        + gain_mult * config.activity_hr_gain * exertion
        + rng.normal(0.0, config.noise_std, n)
    )
    clamped = np.clip(bpm, HR_CLAMP_LO, HR_CLAMP_HI)
    n_clamped = int((clamped != bpm).sum())

    # Location: at work on weekdays 09:00-17:00, otherwise home.
    gps_rel = np.arange(0, n, config.gps_interval_s, dtype=np.int64)
    gps_abs = t_abs[gps_rel]
    workday = ((gps_abs // 86400) % 7) < 5
    at_work = workday & (hod[gps_rel] >= 9.0) & (hod[gps_rel] < 17.0)
    lat = home_lat + np.where(at_work, work_dlat, 0.0) + rng.normal(0.0, config.gps_jitter_deg, len(gps_rel))
    lon = home_lon + np.where(at_work, work_dlon, 0.0) + rng.normal(0.0, config.gps_jitter_deg, len(gps_rel))

    def jitter(count: int) -> np.ndarray:
        if config.timestamp_jitter_ms == 0:
            return np.zeros(count, dtype=np.int64)
        j = config.timestamp_jitter_ms
        return rng.integers(-j, j + 1, count, dtype=np.int64)

    accel_ts = t_abs * 1000 + jitter(n)
    gps_ts = gps_abs * 1000 + jitter(len(gps_rel))
    hr_ts = t_abs * 1000 + jitter(n)

    return SynthParticipant(
        participant_id=participant_id(index),
        accel=SensorRecords("accel", accel_ts, np.column_stack([x, y, z])),
        gps=SensorRecords("gps", gps_ts, np.column_stack([lat, lon])),
        hr=SensorRecords("hr", hr_ts, clamped.reshape(-1, 1)),
        hr_truth=clamped,
        start_epoch_s=config.start_epoch_s,
        n_clamped=n_clamped,
    )


def generate_cohort(config: SynthConfig) -> list[SynthParticipant]:
    return [generate_participant(config, i) for i in range(config.n_participants)]


@dataclass(frozen=True)
class GapPattern:
    """How to knock heart-rate samples out of a record stream."""

    kind: str
    dropout_p: float = 0.0
    start_hour: float = 23.0
    hours: float = 8.0
    depletion_day: int = 5

    def __post_init__(self):
        if self.kind not in GAP_KINDS:
            raise ValueError(f"gap kind must be one of {GAP_KINDS}, got {self.kind!r}")
        if self.kind == "random" and not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError(f"dropout_p must be in [0, 1], got {self.dropout_p}")
        if self.kind == "nightly":
            if not 0.0 <= self.start_hour < 24.0:
                raise ValueError(f"start_hour must be in [0, 24), got {self.start_hour}")
            if not 0.0 < self.hours <= 24.0:
                raise ValueError(f"hours must be in (0, 24], got {self.hours}")
        if self.kind == "battery" and self.depletion_day < 0:
            raise ValueError(f"depletion_day must be >= 0, got {self.depletion_day}")

    @classmethod
    def random_dropout(cls, p: float) -> "GapPattern":
        """Each heart-rate record dropped independently with probability p."""
        return cls(kind="random", dropout_p=p)

    @classmethod
    def nightly_nonwear(cls, start_hour: float = 23.0, hours: float = 8.0) -> "GapPattern":
        """Watch off the wrist every night from start_hour for the given hours."""
        return cls(kind="nightly", start_hour=start_hour, hours=hours)

    @classmethod
    def battery(cls, depletion_day: int) -> "GapPattern":
        """Everything from the given recording day (0-based) onward is lost."""
        return cls(kind="battery", depletion_day=depletion_day)


def inject_gaps(
    hr: SensorRecords,
    patterns: GapPattern | Sequence[GapPattern],
    seed: int = 0,
    tz_offset_minutes: int = 0,
) -> tuple[SensorRecords, GapMask]:
    """Remove heart-rate records per the patterns and return the ground truth.

    A record is dropped when any pattern claims it. The returned mask holds
    the grid seconds that lost their only record, so it matches what gap
    detection will see after alignment. Deterministic per seed; each random
    pattern draws from its own stream keyed by position in the list.

    Raises:
        DataError: the patterns together would delete every sample.
    """
    if isinstance(patterns, GapPattern):
        patterns = [patterns]
    n = len(hr)
    if n == 0:
        raise DataError("cannot inject gaps into an empty heart-rate stream")
    sec = _grid_seconds(hr.timestamps_ms)
    drop = np.zeros(n, dtype=bool)
    for i, pattern in enumerate(patterns):
        if pattern.kind == "random":
            rng = np.random.default_rng([seed, 17, i])
            drop |= rng.random(n) < pattern.dropout_p
        elif pattern.kind == "nightly":
            hod = ((sec + tz_offset_minutes * 60) % 86400) / 3600.0
            end = pattern.start_hour + pattern.hours
            if end <= 24.0:
                drop |= (hod >= pattern.start_hour) & (hod < end)
            else:
                drop |= (hod >= pattern.start_hour) | (hod < end - 24.0)
        else:  # battery
            cutoff = int(sec[0]) + pattern.depletion_day * 86400
            drop |= sec >= cutoff
    if bool(drop.all()):
        raise DataError("gap patterns remove every heart-rate sample")
    if not drop.any():
        return hr, GapMask(intervals=[])
    kept = SensorRecords("hr", hr.timestamps_ms[~drop], hr.values[~drop])
    gap_seconds = np.setdiff1d(sec[drop], sec[~drop])
    return kept, GapMask.from_seconds(gap_seconds)


def write_sensor_csv(records: SensorRecords, path: str | Path) -> None:
    """Write records in the raw channel schema read by the ingest parser."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_ms", *CHANNEL_COLUMNS[records.channel]])
        for ts, vals in zip(records.timestamps_ms, records.values):
            writer.writerow([int(ts), *[repr(float(v)) for v in vals]])


def write_participant_dir(
    part: SynthParticipant,
    directory: str | Path,
    hr_records: SensorRecords | None = None,
    gaps: GapMask | None = None,
) -> dict[str, Path]:
    """Write one participant's channel CSVs (and gap metadata) into a directory.

    hr.csv carries hr_records when given (the post-gap stream), while
    hr_full.csv always holds the complete series for later accuracy checks.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "accel": directory / "accel.csv",
        "gps": directory / "gps.csv",
        "hr": directory / "hr.csv",
        "hr_full": directory / "hr_full.csv",
    }
    write_sensor_csv(part.accel, paths["accel"])
    write_sensor_csv(part.gps, paths["gps"])
    write_sensor_csv(hr_records if hr_records is not None else part.hr, paths["hr"])
    write_sensor_csv(part.hr, paths["hr_full"])
    if gaps is not None:
        paths["gaps"] = directory / "gaps.json"
        paths["gaps"].write_text(
            json.dumps(
                {
                    "participant_id": part.participant_id,
                    "intervals": [[int(s), int(e)] for s, e in gaps.intervals],
                    "total_seconds": gaps.total_seconds(),
                }
            ),
            encoding="utf-8",
        )
    return paths
