"""Prior-window moving-average baseline over the aligned time grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest import AlignedStream
from .base import BaselineState, ModelSpec, TrainedModel


@dataclass
class BaselineResult:
    """Baseline predictions on grid seconds that had a populated prior block."""

    timestamps: np.ndarray  # (k,) int64 grid seconds
    bpm: np.ndarray  # (k,) float64 predicted values
    uncovered_blocks: int  # blocks with no prediction (first block + empty priors)

    def __len__(self) -> int:
        return len(self.timestamps)


def baseline_fit(window: int = 1800, spec: ModelSpec | None = None, target_kind: str = "bpm") -> TrainedModel:
    """Package the baseline as a model so it can be saved and dispatched like one."""
    if spec is None:
        spec = ModelSpec(kind="baseline", baseline_window=window)
    return TrainedModel(spec=spec, state=BaselineState(window=spec.baseline_window), target_kind=target_kind)


def baseline_interpolate(stream: AlignedStream, window: int = 1800) -> BaselineResult:
    """Predict each block of the timeline as the mean of the previous block.

    The timeline is tiled into fixed windows anchored at the stream's first
    grid second. Every second of block k (k >= 1) is predicted as the mean of
    the heart-rate samples observed during block k-1; blocks whose predecessor
    held no samples produce no predictions, as does block 0.

    Args:
        stream: aligned stream; its hr channel may contain NaN gaps.
        window: block length in seconds, > 0.

    Returns:
        BaselineResult with predictions sorted by timestamp.
    """
    if window <= 0:
        raise ValueError(f"window must be > 0, got {window}")
    n = len(stream)
    block = np.arange(n) // window
    n_blocks = int(block[-1]) + 1 if n else 0

    present = stream.hr_present
    counts = np.bincount(block[present], minlength=n_blocks).astype(np.int64)
    sums = np.bincount(block[present], weights=stream.hr[present], minlength=n_blocks)
    means = np.divide(sums, counts, out=np.zeros(n_blocks), where=counts > 0)

    # Block k is predicted from block k-1; block 0 has no predecessor.
    has_pred = np.zeros(n_blocks, dtype=bool)
    has_pred[1:] = counts[:-1] > 0
    pred_value = np.zeros(n_blocks)
    pred_value[1:] = means[:-1]

    covered = has_pred[block]
    timestamps = stream.timestamps[covered]
    bpm = pred_value[block[covered]]
    return BaselineResult(
        timestamps=timestamps,
        bpm=bpm,
        uncovered_blocks=int(n_blocks - has_pred.sum()),
    )
