"""Feature engineering: aligned frames -> model-ready matrix and targets.

Each complete-case grid second (accelerometer, GPS, and heart rate all
present) yields one row of 13 features, in this fixed column order:

    x, y, z, magnitude            acceleration (g); optionally |v - 1.0|
    lat2, lon2, lat1, lon1,       successive half-away-from-zero roundings
    lat0, lon0                    of the fix (2, 1, 0 decimals)
    hour, minute, second          local clock components

Targets are raw bpm or per-participant z-scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DataError
from .ingest import AlignedStream

FEATURE_NAMES = (
    "x",
    "y",
    "z",
    "magnitude",
    "lat2",
    "lon2",
    "lat1",
    "lon1",
    "lat0",
    "lon0",
    "hour",
    "minute",
    "second",
)
N_FEATURES = len(FEATURE_NAMES)

DEVIATION_MODES = ("none", "magnitude", "all")

TARGET_BPM = "bpm"
TARGET_ZSCORE = "zscore"


def accel_magnitude(x: float, y: float, z: float) -> float:
    """Euclidean norm of the acceleration vector."""
    return float(np.sqrt(x * x + y * y + z * z))


def deviation_transform(value: float) -> float:
    """Distance from the at-rest magnitude of 1 g; orientation-free by construction."""
    return abs(value - 1.0)


def _quantum(decimals: int) -> Decimal:
    return Decimal(1).scaleb(-decimals)


def round_coordinate(value: float, decimals: int) -> float:
    """Round a coordinate half-away-from-zero to 0, 1, or 2 decimals.

    Operates on the shortest decimal representation of the float, so literal
    ties like -78.55 round to -78.6 rather than falling on binary noise.
    """
    if decimals not in (0, 1, 2):
        raise ValueError(f"decimals must be 0, 1, or 2, got {decimals}")
    return float(Decimal(repr(float(value))).quantize(_quantum(decimals), rounding=ROUND_HALF_UP))


def round_half_away(values: np.ndarray, decimals: int) -> np.ndarray:
    """Vectorized round_coordinate.

    Fast float path everywhere except within 1e-6 of a tie, where the exact
    decimal rule is applied element-wise so results match round_coordinate.
    """
    values = np.asarray(values, dtype=np.float64)
    scale = 10.0**decimals
    scaled = np.abs(values) * scale
    frac = scaled - np.floor(scaled)
    out = np.where(values < 0, -1.0, 1.0) * np.floor(scaled + 0.5) / scale
    near_tie = np.abs(frac - 0.5) < 1e-6
    if np.any(near_tie):
        flat_out = out.ravel()
        flat_val = values.ravel()
        q = _quantum(decimals)
        for i in np.flatnonzero(near_tie.ravel()):
            flat_out[i] = float(
                Decimal(repr(float(flat_val[i]))).quantize(q, rounding=ROUND_HALF_UP)
            )
        out = flat_out.reshape(values.shape)
    return out


def time_components(timestamp_s: int, tz_offset_minutes: int = 0) -> tuple[int, int, int]:
    """Local (hour, minute, second) of an epoch second under a fixed UTC offset."""
    if not -840 <= tz_offset_minutes <= 840:
        raise ValueError(f"tz offset {tz_offset_minutes} outside [-840, 840] minutes")
    local = (int(timestamp_s) + tz_offset_minutes * 60) % 86400
    return local // 3600, (local % 3600) // 60, local % 60


@dataclass(frozen=True)
class ZScoreParams:
    """Per-participant standardization parameters (population std)."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"z-score std must be positive, got {self.std}")


def zscore_fit(bpm_values: Sequence[float] | np.ndarray) -> ZScoreParams:
    """Fit mean and population standard deviation of a bpm series."""
    arr = np.asarray(bpm_values, dtype=np.float64)
    if arr.size < 2:
        raise DataError(f"z-score fit needs at least 2 values, got {arr.size}")
    mean = float(arr.mean())
    std = float(np.sqrt(np.mean((arr - mean) ** 2)))
    if std < 1e-9:
        raise DataError("constant heart-rate series: z-score is undefined")
    return ZScoreParams(mean=mean, std=std)


def zscore_apply(bpm, params: ZScoreParams):
    return (np.asarray(bpm, dtype=np.float64) - params.mean) / params.std


def zscore_invert(z, params: ZScoreParams):
    return np.asarray(z, dtype=np.float64) * params.std + params.mean


@dataclass
class FeatureMatrix:
    """Feature rows plus aligned target, participant, and timestamp vectors."""

    X: np.ndarray  # (n, N_FEATURES) float64
    y: np.ndarray  # (n,) float64
    participant_ids: np.ndarray  # (n,) str
    target_kind: str  # TARGET_BPM or TARGET_ZSCORE
    timestamps: np.ndarray  # (n,) int64 grid seconds

    def __post_init__(self):
        n = len(self.y)
        if self.X.shape[0] != n or len(self.participant_ids) != n or len(self.timestamps) != n:
            raise ValueError("feature matrix columns disagree on row count")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("targets must all be finite")

    def __len__(self) -> int:
        return len(self.y)

    def select(self, idx: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            X=self.X[idx],
            y=self.y[idx],
            participant_ids=self.participant_ids[idx],
            target_kind=self.target_kind,
            timestamps=self.timestamps[idx],
        )


def feature_rows(
    stream: AlignedStream,
    indices: np.ndarray,
    deviation_mode: str = "all",
    tz_offset_minutes: int = 0,
) -> np.ndarray:
    """Feature columns for the given grid indices (accel and gps must be present there)."""
    if deviation_mode not in DEVIATION_MODES:
        raise ValueError(f"deviation_mode must be one of {DEVIATION_MODES}")
    indices = np.asarray(indices, dtype=np.int64)
    accel = stream.accel[indices]
    gps = stream.gps[indices]
    if np.isnan(accel).any() or np.isnan(gps).any():
        raise ValueError("feature_rows called on rows with absent accel or gps")

    magnitude = np.sqrt(np.sum(accel**2, axis=1))
    if deviation_mode == "all":
        accel = np.abs(accel - 1.0)
        magnitude = np.abs(magnitude - 1.0)
    elif deviation_mode == "magnitude":
        magnitude = np.abs(magnitude - 1.0)

    lat, lon = gps[:, 0], gps[:, 1]
    lat2 = round_half_away(lat, 2)
    lon2 = round_half_away(lon, 2)
    lat1 = round_half_away(lat2, 1)
    lon1 = round_half_away(lon2, 1)
    lat0 = round_half_away(lat1, 0)
    lon0 = round_half_away(lon1, 0)

    if not -840 <= tz_offset_minutes <= 840:
        raise ValueError(f"tz offset {tz_offset_minutes} outside [-840, 840] minutes")
    local = (stream.timestamps[indices] + tz_offset_minutes * 60) % 86400
    hour = local // 3600
    minute = (local % 3600) // 60
    second = local % 60

    return np.column_stack(
        [
            accel[:, 0],
            accel[:, 1],
            accel[:, 2],
            magnitude,
            lat2,
            lon2,
            lat1,
            lon1,
            lat0,
            lon0,
            hour.astype(np.float64),
            minute.astype(np.float64),
            second.astype(np.float64),
        ]
    )


def complete_case_indices(stream: AlignedStream) -> np.ndarray:
    """Grid indices where accelerometer, GPS, and heart rate are all present."""
    return np.flatnonzero(stream.accel_present & stream.gps_present & stream.hr_present)


def build_feature_matrix(
    stream: AlignedStream,
    target_kind: str = TARGET_BPM,
    zscore: Optional[ZScoreParams] = None,
    deviation_mode: str = "all",
    tz_offset_minutes: int = 0,
    indices: Optional[np.ndarray] = None,
) -> FeatureMatrix:
    """Build the feature matrix for one participant's stream.

    Only complete-case rows are emitted. ``indices`` restricts the build to a
    subset of grid indices (they are still filtered to complete cases), which
    keeps subsampled evaluation from featurizing rows it will never use.
    """
    if target_kind not in (TARGET_BPM, TARGET_ZSCORE):
        raise ValueError(f"unknown target kind {target_kind!r}")
    complete = stream.accel_present & stream.gps_present & stream.hr_present
    if indices is None:
        rows = np.flatnonzero(complete)
    else:
        indices = np.asarray(indices, dtype=np.int64)
        rows = indices[complete[indices]]
    if rows.size == 0:
        raise DataError(
            f"participant {stream.participant_id!r}: no complete-case rows to featurize"
        )

    X = feature_rows(stream, rows, deviation_mode, tz_offset_minutes)
    bpm = stream.hr[rows]
    if target_kind == TARGET_ZSCORE:
        if zscore is None:
            raise ValueError("z-score target requires ZScoreParams")
        y = zscore_apply(bpm, zscore)
    else:
        y = bpm.copy()

    return FeatureMatrix(
        X=X,
        y=y,
        participant_ids=np.full(rows.size, stream.participant_id, dtype=object),
        target_kind=target_kind,
        timestamps=stream.timestamps[rows],
    )


def concat_matrices(matrices: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Pool matrices with a common target kind into one."""
    if not matrices:
        raise ValueError("nothing to concatenate")
    kinds = {m.target_kind for m in matrices}
    if len(kinds) != 1:
        raise ValueError(f"cannot pool mixed target kinds {sorted(kinds)}")
    return FeatureMatrix(
        X=np.concatenate([m.X for m in matrices]),
        y=np.concatenate([m.y for m in matrices]),
        participant_ids=np.concatenate([m.participant_ids for m in matrices]),
        target_kind=matrices[0].target_kind,
        timestamps=np.concatenate([m.timestamps for m in matrices]),
    )


FEATURE_CSV_HEADER = ["participant_id", *FEATURE_NAMES, "target", "target_kind"]


def write_feature_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_CSV_HEADER)
        for i in range(len(matrix)):
            writer.writerow(
                [matrix.participant_ids[i]]
                + [repr(float(v)) for v in matrix.X[i]]
                + [repr(float(matrix.y[i])), matrix.target_kind]
            )
