"""Cross-validated evaluation of heart-rate predictors, and gap filling.

Two evaluation scopes mirror the two deployment stories:

* personalized: one model per participant, trained and scored on that
  participant's own rows, target in bpm.
* generalized: one pooled model over all participants, target in per-person
  z-scores so resting-rate differences between people drop out.

Every model in a run is scored on exactly the same rows per fold: test rows
that the moving-average baseline can cover after the test seconds are masked
out of its input.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .features import (
    FeatureMatrix,
    ZScoreParams,
    build_feature_matrix,
    complete_case_indices,
    concat_matrices,
    zscore_fit,
)
from .ingest import AlignedStream, GapMask, detect_gaps
from .models import (
    ImportanceTable,
    ModelSpec,
    TrainedModel,
    baseline_interpolate,
    build_importance_table,
    fit_model,
    forest_fit,
    predict,
)

logger = logging.getLogger(__name__)

SCOPE_PERSONALIZED = "personalized"
SCOPE_GENERALIZED = "generalized"
POOLED_ID = "(pooled)"
BASELINE_NAME = "baseline"
FOLD_MEAN = -1


def r_squared(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    Raises:
        ValueError: fewer than two values, or constant actuals (SS_tot = 0).
    """
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ValueError("actual and predicted must be 1-d arrays of equal length")
    if len(actual) < 2:
        raise ValueError("R^2 needs at least two values")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot <= 0.0:
        raise ValueError("R^2 undefined: actual values are constant")
    ss_res = float(np.sum((actual - predicted) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Root mean squared error."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ValueError("actual and predicted must be 1-d arrays of equal length")
    if len(actual) == 0:
        raise ValueError("RMSE needs at least one value")
    return float(np.sqrt(np.mean((actual - predicted) ** 2)))


FOLD_POLICIES = ("shuffled", "blocked")


@dataclass
class FoldAssignment:
    """Fold index per row; folds partition range(n)."""

    fold_of_row: np.ndarray  # (n,) int64
    policy: str
    seed: int | Sequence[int]

    @property
    def n_folds(self) -> int:
        return int(self.fold_of_row.max()) + 1

    def test_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == k)

    def train_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != k)


def kfold_split(
    n_rows: int,
    k: int = 5,
    policy: str = "shuffled",
    seed: int | Sequence[int] = 0,
) -> FoldAssignment:
    """Assign each of n_rows rows to one of k folds.

    The "shuffled" policy (default) permutes the rows first, so every fold
    mixes the whole recording period. The "blocked" policy keeps rows in k
    contiguous chunks, which respects temporal order at the price of harder
    extrapolation. Fold sizes differ by at most one row.

    Raises:
        DataError: fewer rows than folds, fewer than 2 folds, or an unknown
            policy name.
    """
    if policy not in FOLD_POLICIES:
        raise DataError(f"unknown fold policy {policy!r}; expected one of {FOLD_POLICIES}")
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    if n_rows < k:
        raise DataError(f"cannot split {n_rows} rows into {k} folds")
    fold_of_row = np.empty(n_rows, dtype=np.int64)
    if policy == "blocked":
        order = np.arange(n_rows)
    else:
        order = np.random.default_rng(seed).permutation(n_rows)
    for j, chunk in enumerate(np.array_split(order, k)):
        fold_of_row[chunk] = j
    return FoldAssignment(fold_of_row=fold_of_row, policy=policy, seed=seed)


@dataclass
class EvalOptions:
    """Knobs shared by both evaluation scopes."""

    n_folds: int = 5
    seed: int = 0
    fold_policy: str = "shuffled"
    deviation_mode: str = "all"
    tz_offset_minutes: int = 0
    # Row caps keep kernel-matrix models and Decimal rounding tractable on
    # week-long 1 Hz streams; sampling is seeded and uniform over rows.
    max_rows_per_participant: int | None = 2000
    max_rows_pooled: int | None = 4000
    baseline_window: int = 1800
    threads: int = 1
    svr_tol: float = 1e-3
    svr_max_iter: int = 500_000
    importance: bool = False
    collect_trace: bool = False

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.fold_policy not in FOLD_POLICIES:
            raise ValueError(
                f"fold_policy must be one of {FOLD_POLICIES}, got {self.fold_policy!r}"
            )
        if self.baseline_window <= 0:
            raise ValueError(f"baseline_window must be > 0, got {self.baseline_window}")
        for name in ("max_rows_per_participant", "max_rows_pooled"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1 or None, got {v}")


@dataclass
class MetricEntry:
    scope: str
    participant_id: str
    model: str
    fold: int  # FOLD_MEAN marks the mean over evaluated folds
    r2: float
    rmse: float
    n_test: int


@dataclass
class TraceRow:
    scope: str
    participant_id: str
    model: str
    fold: int
    timestamp_s: int
    actual: float
    predicted: float


@dataclass
class EvaluationReport:
    """Flat metric entries plus importance tables and run warnings."""

    entries: list[MetricEntry] = field(default_factory=list)
    importances: dict[str, ImportanceTable] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    trace: list[TraceRow] = field(default_factory=list)

    def models(self) -> list[str]:
        seen: list[str] = []
        for e in self.entries:
            if e.model not in seen:
                seen.append(e.model)
        return seen

    def fold_mean(self, scope: str, participant_id: str, model: str) -> MetricEntry | None:
        for e in self.entries:
            if (
                e.scope == scope
                and e.participant_id == participant_id
                and e.model == model
                and e.fold == FOLD_MEAN
            ):
                return e
        return None

    def cross_participant_mean(self, scope: str, model: str) -> tuple[float, float]:
        """Arithmetic mean of the per-participant fold means (r2, rmse).

        Pooled-scope rows are excluded: only genuine participants enter the
        average, so the value is comparable across evaluation scopes.
        """
        rows = [
            e
            for e in self.entries
            if e.scope == scope
            and e.model == model
            and e.fold == FOLD_MEAN
            and e.participant_id != POOLED_ID
        ]
        if not rows:
            raise DataError(f"no fold-mean entries for scope={scope!r} model={model!r}")
        return (
            float(np.mean([e.r2 for e in rows])),
            float(np.mean([e.rmse for e in rows])),
        )

    def pooled_mean(self, model: str) -> MetricEntry | None:
        """The pooled fold-mean entry of the generalized scope (z-score units)."""
        return self.fold_mean(SCOPE_GENERALIZED, POOLED_ID, model)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


def _subsample(indices: np.ndarray, cap: int | None, seed_seq: list[int]) -> np.ndarray:
    if cap is None or len(indices) <= cap:
        return indices
    rng = np.random.default_rng(seed_seq)
    pick = rng.choice(len(indices), size=cap, replace=False)
    pick.sort()
    return indices[pick]


def _mask_hr(stream: AlignedStream, grid_positions: np.ndarray) -> AlignedStream:
    masked = stream.copy()
    masked.hr[grid_positions] = np.nan
    return masked


def _baseline_grid(stream: AlignedStream, test_positions: np.ndarray, window: int) -> np.ndarray:
    """Baseline prediction per grid position (NaN where uncovered), with the
    test seconds hidden from the baseline's input."""
    masked = _mask_hr(stream, test_positions)
    result = baseline_interpolate(masked, window=window)
    grid = np.full(len(stream), np.nan)
    grid[result.timestamps - stream.start_sec] = result.bpm
    return grid


def _fit_and_predict(
    spec: ModelSpec,
    train: FeatureMatrix,
    test_X: np.ndarray,
    options: EvalOptions,
) -> np.ndarray:
    model = fit_model(
        spec,
        train,
        threads=options.threads,
        svr_tol=options.svr_tol,
        svr_max_iter=options.svr_max_iter,
    )
    return predict(model, test_X)


def _mean_entry(scope: str, pid: str, model: str, folds: list[MetricEntry]) -> MetricEntry:
    return MetricEntry(
        scope=scope,
        participant_id=pid,
        model=model,
        fold=FOLD_MEAN,
        r2=float(np.mean([e.r2 for e in folds])),
        rmse=float(np.mean([e.rmse for e in folds])),
        n_test=int(sum(e.n_test for e in folds)),
    )


def _importance_spec(specs: Sequence[ModelSpec]) -> ModelSpec:
    for spec in specs:
        if spec.kind == "forest":
            return spec
    return ModelSpec(kind="forest")


def _stamp_metadata(
    report: EvaluationReport, specs: Sequence[ModelSpec], options: EvalOptions
) -> None:
    report.metadata["model_specs"] = [vars(s) for s in specs]
    report.metadata["seed"] = options.seed
    report.metadata["fold_policy"] = options.fold_policy
    report.metadata["n_folds"] = options.n_folds
    report.metadata.setdefault("created_unix_s", int(time.time()))


def run_personalized(
    streams: Sequence[AlignedStream],
    specs: Sequence[ModelSpec],
    options: EvalOptions | None = None,
    report: EvaluationReport | None = None,
) -> EvaluationReport:
    """Per-participant cross-validation with bpm targets.

    For each participant, complete-case rows are split into folds; each model
    trains on the non-test folds and is scored on the test rows the baseline
    can cover. Folds whose scored rows are empty or constant are skipped with
    a warning.
    """
    options = options or EvalOptions()
    report = report or EvaluationReport()
    report.metadata.setdefault("scopes", []).append(SCOPE_PERSONALIZED)
    report.metadata["n_participants"] = len(streams)
    _stamp_metadata(report, specs, options)

    for pidx, stream in enumerate(streams):
        pid = stream.participant_id
        all_rows = complete_case_indices(stream)
        if len(all_rows) < options.n_folds:
            report.warn(
                f"{SCOPE_PERSONALIZED}: participant {pid} has {len(all_rows)} usable rows, "
                f"fewer than {options.n_folds} folds; excluded"
            )
            continue
        rows = _subsample(all_rows, options.max_rows_per_participant, [options.seed, 101, pidx])
        matrix = build_feature_matrix(
            stream,
            target_kind="bpm",
            deviation_mode=options.deviation_mode,
            tz_offset_minutes=options.tz_offset_minutes,
            indices=rows,
        )
        folds = kfold_split(
            len(matrix), options.n_folds, policy=options.fold_policy, seed=[options.seed, 202, pidx]
        )

        per_model_folds: dict[str, list[MetricEntry]] = {BASELINE_NAME: []}
        for spec in specs:
            per_model_folds.setdefault(spec.kind, [])

        for k in range(options.n_folds):
            test = folds.test_indices(k)
            train = folds.train_indices(k)
            test_positions = (matrix.timestamps[test] - stream.start_sec).astype(np.int64)
            base_grid = _baseline_grid(stream, test_positions, options.baseline_window)
            covered = ~np.isnan(base_grid[test_positions])
            scored = test[covered]
            if len(scored) < 2:
                report.warn(
                    f"{SCOPE_PERSONALIZED}: participant {pid} fold {k}: "
                    f"{len(scored)} baseline-covered test rows; fold skipped"
                )
                continue
            actual = matrix.y[scored]
            if float(np.std(actual)) <= 0.0:
                report.warn(
                    f"{SCOPE_PERSONALIZED}: participant {pid} fold {k}: "
                    "constant heart rate in scored rows; fold skipped"
                )
                continue
            scored_positions = (matrix.timestamps[scored] - stream.start_sec).astype(np.int64)
            preds: dict[str, np.ndarray] = {BASELINE_NAME: base_grid[scored_positions]}
            train_matrix = matrix.select(train)
            test_X = matrix.X[scored]
            for spec in specs:
                if spec.kind == BASELINE_NAME:
                    continue
                preds[spec.kind] = _fit_and_predict(spec, train_matrix, test_X, options)

            for name, pred in preds.items():
                entry = MetricEntry(
                    scope=SCOPE_PERSONALIZED,
                    participant_id=pid,
                    model=name,
                    fold=k,
                    r2=r_squared(actual, pred),
                    rmse=rmse(actual, pred),
                    n_test=len(scored),
                )
                report.entries.append(entry)
                per_model_folds[name].append(entry)
                if options.collect_trace:
                    for ts, a, p in zip(matrix.timestamps[scored], actual, pred):
                        report.trace.append(
                            TraceRow(SCOPE_PERSONALIZED, pid, name, k, int(ts), float(a), float(p))
                        )

        for name, fold_entries in per_model_folds.items():
            if fold_entries:
                report.entries.append(_mean_entry(SCOPE_PERSONALIZED, pid, name, fold_entries))
            else:
                report.warn(
                    f"{SCOPE_PERSONALIZED}: participant {pid} model {name}: no folds evaluated"
                )

        if options.importance:
            imp_model = forest_fit(matrix, spec=_importance_spec(specs), threads=options.threads)
            report.importances[f"{SCOPE_PERSONALIZED}:{pid}"] = build_importance_table(
                imp_model.state, matrix, seed=options.seed
            )

    if options.importance:
        _add_mean_importance(report)
    return report


def _add_mean_importance(report: EvaluationReport) -> None:
    tables = [
        t for key, t in report.importances.items() if key.startswith(f"{SCOPE_PERSONALIZED}:")
    ]
    if not tables:
        return
    names = tables[0].feature_names
    split = np.mean([t.split_gain for t in tables], axis=0)
    total = split.sum()
    if total > 0:
        split = split / total
    perm_raw = np.mean([t.permutation_raw for t in tables], axis=0)
    report.importances[f"{SCOPE_PERSONALIZED}:mean"] = ImportanceTable(
        feature_names=names,
        split_gain=split,
        permutation=np.maximum(perm_raw, 0.0),
        permutation_raw=perm_raw,
    )


def run_generalized(
    streams: Sequence[AlignedStream],
    specs: Sequence[ModelSpec],
    options: EvalOptions | None = None,
    report: EvaluationReport | None = None,
) -> EvaluationReport:
    """Pooled cross-validation with per-participant z-score targets.

    Rows from all participants are pooled; fold assignment is stratified by
    participant, so every participant contributes rows to every fold. Within
    each fold, z-score parameters come from each participant's training rows
    only; participants whose training rows are missing or constant in a fold
    are dropped from that fold with a warning. Baseline bpm predictions are
    converted with the same parameters so all models are scored in z units on
    identical rows. Alongside the pooled z-score metrics, the report records
    per-participant metrics in bpm, obtained by inverting each participant's
    test predictions with that fold's training-fit parameters; these make the
    generalized scope directly comparable with the personalized one.

    Raises:
        DataError: fewer than two usable participants.
    """
    options = options or EvalOptions()
    report = report or EvaluationReport()
    report.metadata.setdefault("scopes", []).append(SCOPE_GENERALIZED)
    report.metadata["n_participants"] = len(streams)
    _stamp_metadata(report, specs, options)

    quota = None
    if options.max_rows_pooled is not None:
        quota = max(1, options.max_rows_pooled // max(1, len(streams)))

    matrices = []
    kept_streams = []
    for pidx, stream in enumerate(streams):
        all_rows = complete_case_indices(stream)
        if len(all_rows) < options.n_folds:
            report.warn(
                f"{SCOPE_GENERALIZED}: participant {stream.participant_id} has "
                f"{len(all_rows)} usable rows, fewer than {options.n_folds} folds; excluded"
            )
            continue
        hr = stream.hr[all_rows]
        if float(np.std(hr)) < 1e-9:
            report.warn(
                f"{SCOPE_GENERALIZED}: participant {stream.participant_id} has constant "
                "heart rate; z-scores undefined; excluded"
            )
            continue
        rows = _subsample(all_rows, quota, [options.seed, 303, pidx])
        matrices.append(
            build_feature_matrix(
                stream,
                target_kind="bpm",
                deviation_mode=options.deviation_mode,
                tz_offset_minutes=options.tz_offset_minutes,
                indices=rows,
            )
        )
        kept_streams.append(stream)
    if len(matrices) < 2:
        raise DataError(
            f"generalized evaluation needs at least 2 usable participants, got {len(matrices)}"
        )

    pooled = concat_matrices(matrices)
    stream_of = {s.participant_id: s for s in kept_streams}

    # Stratified fold assignment: split each participant's rows independently
    # so every participant contributes to every fold.
    fold_of_row = np.empty(len(pooled), dtype=np.int64)
    for pidx, stream in enumerate(kept_streams):
        rows_p = np.flatnonzero(pooled.participant_ids == stream.participant_id)
        sub = kfold_split(
            len(rows_p),
            options.n_folds,
            policy=options.fold_policy,
            seed=[options.seed, 404, pidx],
        )
        fold_of_row[rows_p] = sub.fold_of_row
    folds = FoldAssignment(
        fold_of_row=fold_of_row, policy=options.fold_policy, seed=options.seed
    )

    per_model_folds: dict[str, list[MetricEntry]] = {BASELINE_NAME: []}
    for spec in specs:
        per_model_folds.setdefault(spec.kind, [])
    per_participant_folds: dict[tuple[str, str], list[MetricEntry]] = {}

    for k in range(options.n_folds):
        test = folds.test_indices(k)
        train = folds.train_indices(k)

        # Per-participant z parameters from training rows only.
        zparams: dict[str, ZScoreParams] = {}
        for pid in stream_of:
            train_p = train[pooled.participant_ids[train] == pid]
            if len(train_p) < 2:
                report.warn(
                    f"{SCOPE_GENERALIZED}: fold {k}: participant {pid} has "
                    f"{len(train_p)} training rows; dropped from fold"
                )
                continue
            try:
                zparams[pid] = zscore_fit(pooled.y[train_p])
            except DataError:
                report.warn(
                    f"{SCOPE_GENERALIZED}: fold {k}: participant {pid} training heart "
                    "rate is constant; dropped from fold"
                )

        def keep(indices: np.ndarray) -> np.ndarray:
            mask = np.isin(pooled.participant_ids[indices], list(zparams))
            return indices[mask]

        train_kept = keep(train)
        test_kept = keep(test)

        # Baseline coverage per participant, in bpm, then converted to z.
        base_z = np.full(len(pooled), np.nan)
        for pid, zp in zparams.items():
            stream = stream_of[pid]
            test_p = test_kept[pooled.participant_ids[test_kept] == pid]
            if len(test_p) == 0:
                continue
            positions = (pooled.timestamps[test_p] - stream.start_sec).astype(np.int64)
            grid = _baseline_grid(stream, positions, options.baseline_window)
            bpm_pred = grid[positions]
            base_z[test_p] = (bpm_pred - zp.mean) / zp.std
        covered = ~np.isnan(base_z[test_kept])
        scored = test_kept[covered]
        if len(scored) < 2:
            report.warn(
                f"{SCOPE_GENERALIZED}: fold {k}: {len(scored)} baseline-covered test rows; "
                "fold skipped"
            )
            continue

        def to_z(indices: np.ndarray) -> np.ndarray:
            out = np.empty(len(indices))
            for i, row in enumerate(indices):
                zp = zparams[pooled.participant_ids[row]]
                out[i] = (pooled.y[row] - zp.mean) / zp.std
            return out

        actual = to_z(scored)
        if float(np.std(actual)) <= 0.0:
            report.warn(
                f"{SCOPE_GENERALIZED}: fold {k}: constant z-scores in scored rows; fold skipped"
            )
            continue

        train_matrix = FeatureMatrix(
            X=pooled.X[train_kept],
            y=to_z(train_kept),
            participant_ids=pooled.participant_ids[train_kept],
            target_kind="zscore",
            timestamps=pooled.timestamps[train_kept],
        )
        test_X = pooled.X[scored]
        preds: dict[str, np.ndarray] = {BASELINE_NAME: base_z[scored]}
        for spec in specs:
            if spec.kind == BASELINE_NAME:
                continue
            preds[spec.kind] = _fit_and_predict(spec, train_matrix, test_X, options)

        for name, pred in preds.items():
            entry = MetricEntry(
                scope=SCOPE_GENERALIZED,
                participant_id=POOLED_ID,
                model=name,
                fold=k,
                r2=r_squared(actual, pred),
                rmse=rmse(actual, pred),
                n_test=len(scored),
            )
            report.entries.append(entry)
            per_model_folds[name].append(entry)
            if options.collect_trace:
                for row, a, p in zip(scored, actual, pred):
                    report.trace.append(
                        TraceRow(
                            SCOPE_GENERALIZED,
                            str(pooled.participant_ids[row]),
                            name,
                            k,
                            int(pooled.timestamps[row]),
                            float(a),
                            float(p),
                        )
                    )

        # Per-participant metrics in bpm: invert the z predictions with this
        # fold's training-fit parameters so scopes can be compared head-on.
        pids_scored = pooled.participant_ids[scored]
        for pid in np.unique(pids_scored):
            in_p = pids_scored == pid
            rows_p = scored[in_p]
            actual_bpm = pooled.y[rows_p]
            if len(rows_p) < 2 or float(np.std(actual_bpm)) <= 0.0:
                report.warn(
                    f"{SCOPE_GENERALIZED}: fold {k}: participant {pid}: too few or "
                    "constant scored rows for bpm metrics; participant-fold skipped"
                )
                continue
            zp = zparams[str(pid)]
            for name, pred in preds.items():
                bpm_pred = pred[in_p] * zp.std + zp.mean
                entry = MetricEntry(
                    scope=SCOPE_GENERALIZED,
                    participant_id=str(pid),
                    model=name,
                    fold=k,
                    r2=r_squared(actual_bpm, bpm_pred),
                    rmse=rmse(actual_bpm, bpm_pred),
                    n_test=len(rows_p),
                )
                report.entries.append(entry)
                per_participant_folds.setdefault((str(pid), name), []).append(entry)

    for name, fold_entries in per_model_folds.items():
        if fold_entries:
            report.entries.append(_mean_entry(SCOPE_GENERALIZED, POOLED_ID, name, fold_entries))
        else:
            report.warn(f"{SCOPE_GENERALIZED}: model {name}: no folds evaluated")
    for (pid, name), fold_entries in per_participant_folds.items():
        report.entries.append(_mean_entry(SCOPE_GENERALIZED, pid, name, fold_entries))

    if options.importance:
        # Full-data z targets for the pooled importance fit.
        zs = np.empty(len(pooled))
        for pid in stream_of:
            rows_p = np.flatnonzero(pooled.participant_ids == pid)
            zp = zscore_fit(pooled.y[rows_p])
            zs[rows_p] = (pooled.y[rows_p] - zp.mean) / zp.std
        z_matrix = FeatureMatrix(
            X=pooled.X,
            y=zs,
            participant_ids=pooled.participant_ids,
            target_kind="zscore",
            timestamps=pooled.timestamps,
        )
        imp_model = forest_fit(z_matrix, spec=_importance_spec(specs), threads=options.threads)
        report.importances[SCOPE_GENERALIZED] = build_importance_table(
            imp_model.state, z_matrix, seed=options.seed
        )
    return report


@dataclass
class FillResult:
    """Predicted bpm for gap seconds that had usable sensor features."""

    timestamps: np.ndarray  # (k,) int64 grid seconds
    bpm: np.ndarray  # (k,) float64
    n_unfillable: int  # gap seconds lacking accelerometer or GPS features

    def __len__(self) -> int:
        return len(self.timestamps)


def fill_gaps(
    stream: AlignedStream,
    model: TrainedModel,
    gaps: GapMask | None = None,
    deviation_mode: str = "all",
    tz_offset_minutes: int = 0,
) -> FillResult:
    """Predict heart rate inside the stream's gaps from sensor features.

    Gap seconds without accelerometer and GPS values cannot be featurized and
    are counted as unfillable. Models trained on z-score targets are inverted
    back to bpm with the participant's parameters captured at training time.

    Raises:
        DataError: the model predicts z-scores but has no parameters for this
            participant, or the model is a baseline.
    """
    from .features import feature_rows  # local import to avoid cycle at module load

    if gaps is None:
        gaps = detect_gaps(stream)
    gap_seconds = gaps.seconds()
    if len(gap_seconds) == 0:
        return FillResult(np.empty(0, np.int64), np.empty(0), 0)
    positions = gap_seconds - stream.start_sec
    usable = stream.accel_present[positions] & stream.gps_present[positions]
    fillable = positions[usable]
    n_unfillable = int((~usable).sum())
    if len(fillable) == 0:
        return FillResult(np.empty(0, np.int64), np.empty(0), n_unfillable)

    if model.spec.kind == BASELINE_NAME:
        raise DataError("baseline models cannot fill from features; use baseline_interpolate")
    X = feature_rows(
        stream, fillable, deviation_mode=deviation_mode, tz_offset_minutes=tz_offset_minutes
    )
    pred = predict(model, X)
    if model.target_kind == "zscore":
        zp = model.zscore_by_participant.get(stream.participant_id)
        if zp is None:
            raise DataError(
                f"model predicts z-scores but holds no parameters for participant "
                f"{stream.participant_id!r}"
            )
        pred = pred * zp.std + zp.mean
    return FillResult(
        timestamps=(fillable + stream.start_sec).astype(np.int64),
        bpm=pred,
        n_unfillable=n_unfillable,
    )


FILL_CSV_HEADER = ["timestamp_s", "participant_id", "bpm", "source"]


def write_fill_csv(path: str | Path, stream: AlignedStream, result: FillResult) -> None:
    """Write the stream's heart-rate series with gap predictions merged in.

    Each grid second appears once with source "observed", "filled", or ""
    (neither measured nor fillable; bpm left empty).
    """
    filled = np.full(len(stream), np.nan)
    filled[result.timestamps - stream.start_sec] = result.bpm
    observed = stream.hr_present
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FILL_CSV_HEADER)
        for i, ts in enumerate(stream.timestamps):
            if observed[i]:
                writer.writerow([ts, stream.participant_id, repr(float(stream.hr[i])), "observed"])
            elif not np.isnan(filled[i]):
                writer.writerow([ts, stream.participant_id, repr(float(filled[i])), "filled"])
            else:
                writer.writerow([ts, stream.participant_id, "", ""])


REPORT_FORMAT = "hrfill-report"
REPORT_VERSION = 1


def export_report(report: EvaluationReport, json_path: str | Path, csv_path: str | Path | None = None) -> None:
    """Write the report as JSON, and optionally the metric entries as CSV."""
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "metadata": report.metadata,
        "warnings": report.warnings,
        "entries": [vars(e) for e in report.entries],
        "importances": {
            key: {
                "feature_names": list(t.feature_names),
                "split_gain": t.split_gain.tolist(),
                "permutation": t.permutation.tolist(),
                "permutation_raw": t.permutation_raw.tolist(),
            }
            for key, t in report.importances.items()
        },
    }
    Path(json_path).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scope", "participant_id", "model", "fold", "r2", "rmse", "n_test"])
            for e in report.entries:
                writer.writerow(
                    [e.scope, e.participant_id, e.model, e.fold, repr(e.r2), repr(e.rmse), e.n_test]
                )


def import_report(json_path: str | Path) -> EvaluationReport:
    """Read a report written by export_report."""
    try:
        doc = json.loads(Path(json_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {json_path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != REPORT_FORMAT:
        raise DataError(f"{json_path} is not an evaluation report")
    report = EvaluationReport(metadata=doc.get("metadata", {}), warnings=doc.get("warnings", []))
    for raw in doc.get("entries", []):
        report.entries.append(MetricEntry(**raw))
    for key, t in doc.get("importances", {}).items():
        report.importances[key] = ImportanceTable(
            feature_names=tuple(t["feature_names"]),
            split_gain=np.asarray(t["split_gain"]),
            permutation=np.asarray(t["permutation"]),
            permutation_raw=np.asarray(t["permutation_raw"]),
        )
    return report


TRACE_HEADER = ["timestamp_s", "actual_bpm", "predicted_bpm"]


def export_prediction_trace(
    model: TrainedModel, frames: FeatureMatrix, path: str | Path
) -> None:
    """Write actual-vs-predicted pairs for every frame, for external plotting.

    One CSV row per feature-matrix row: ``timestamp_s,actual_bpm,predicted_bpm``.
    Models that predict z-scores are inverted back to bpm with their stored
    per-participant parameters when the frames carry bpm targets.

    Raises:
        DataError: baseline model, or a z-score model lacking parameters for
            a participant present in the frames.
    """
    if model.spec.kind == BASELINE_NAME:
        raise DataError("baseline models have no feature predictions to trace")
    pred = predict(model, frames.X)
    if model.target_kind == "zscore" and frames.target_kind == "bpm":
        for pid in np.unique(frames.participant_ids):
            zp = model.zscore_by_participant.get(str(pid))
            if zp is None:
                raise DataError(
                    f"model predicts z-scores but holds no parameters for participant {pid!r}"
                )
            in_p = frames.participant_ids == pid
            pred[in_p] = pred[in_p] * zp.std + zp.mean
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for ts, a, p in zip(frames.timestamps, frames.y, pred):
            writer.writerow([int(ts), repr(float(a)), repr(float(p))])


def export_trace_rows(report: EvaluationReport, path: str | Path) -> None:
    """Write the report's collected held-out predictions as one flat CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "participant_id", "model", "fold", "timestamp_s", "actual", "predicted"])
        for row in report.trace:
            writer.writerow(
                [
                    row.scope,
                    row.participant_id,
                    row.model,
                    row.fold,
                    row.timestamp_s,
                    repr(row.actual),
                    repr(row.predicted),
                ]
            )


def render_report(report: EvaluationReport) -> str:
    """Human-readable summary: one metric block per scope (two when a scope
    carries both pooled z-score and per-participant bpm results)."""
    lines: list[str] = []
    scopes = []
    for e in report.entries:
        if e.scope not in scopes:
            scopes.append(e.scope)

    def block(title: str, rows: list[tuple[str, float, float]]) -> None:
        lines.append(title)
        lines.append(f"  {'model':<10} {'R^2':>9} {'RMSE':>9}")
        for name, r2_m, rmse_m in rows:
            lines.append(f"  {name:<10} {r2_m:>9.4f} {rmse_m:>9.4f}")
        lines.append("")

    for scope in scopes:
        pooled_rows = []
        for model in report.models():
            e = report.fold_mean(scope, POOLED_ID, model)
            if e is not None:
                pooled_rows.append((model, e.r2, e.rmse))
        if pooled_rows:
            block(f"{scope} results (pooled, z-score units; mean over folds)", pooled_rows)
        mean_rows = []
        for model in report.models():
            try:
                r2_m, rmse_m = report.cross_participant_mean(scope, model)
            except DataError:
                continue
            mean_rows.append((model, r2_m, rmse_m))
        if mean_rows:
            qualifier = "bpm; " if pooled_rows else ""
            block(
                f"{scope} results ({qualifier}mean over folds, then participants)", mean_rows
            )
    for key, table in report.importances.items():
        lines.append(f"feature importance [{key}]")
        lines.append(f"  {'feature':<12} {'split_gain':>11} {'permutation':>12}")
        for name, score in table.ranked("split_gain"):
            i = table.feature_names.index(name)
            lines.append(f"  {name:<12} {score:>11.4f} {table.permutation[i]:>12.6f}")
        lines.append("")
    if report.warnings:
        lines.append(f"warnings: {len(report.warnings)}")
        for w in report.warnings:
            lines.append(f"  - {w}")
    return "\n".join(lines).rstrip() + "\n"
