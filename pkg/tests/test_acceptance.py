"""Acceptance gate: ten end-to-end checks, one summary line each.

Each test here is a numbered criterion; the conftest terminal-summary hook
prints a PASS/FAIL line per criterion after the run. Tolerances and time
budgets are asserted inside the tests themselves.
"""

import math
import time
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest

from hrfill.config import DEFAULT_MODELS
from hrfill.errors import DataError
from hrfill.evaluate import (
    SCOPE_GENERALIZED,
    SCOPE_PERSONALIZED,
    EvalOptions,
    EvaluationReport,
    MetricEntry,
    export_report,
    fill_gaps,
    import_report,
    r_squared,
    rmse,
    run_generalized,
    run_personalized,
    write_fill_csv,
)
from hrfill.features import (
    FEATURE_NAMES,
    FeatureMatrix,
    accel_magnitude,
    build_feature_matrix,
    complete_case_indices,
    feature_rows,
    time_components,
)
from hrfill.ingest import AlignedStream, align_streams, read_aligned_csv, write_aligned_csv
from hrfill.models import (
    baseline_interpolate,
    build_importance_table,
    forest_fit,
    importance_split_gain,
    predict,
    ridge_fit,
    svr_fit,
)
from hrfill.models.io import load_model, save_model
from hrfill.models.svr import rbf_kernel_matrix
from hrfill.synthgen import GapPattern, SynthConfig, generate_participant, inject_gaps

from conftest import make_matrix
from test_svr import _standardize_like, qp_oracle


def _decimal_round(values, decimals):
    """Independent half-away-from-zero rounding oracle."""
    quantum = Decimal(1).scaleb(-decimals)
    return np.array(
        [float(Decimal(repr(float(v))).quantize(quantum, rounding=ROUND_HALF_UP)) for v in values]
    )


def test_criterion_01_feature_correctness():
    t0 = time.monotonic()

    # vector magnitude, exact on Pythagorean triples and the zero vector
    triples = [
        (3, 4, 0, 5), (6, 8, 0, 10), (5, 12, 0, 13), (8, 15, 0, 17),
        (7, 24, 0, 25), (20, 21, 0, 29), (1, 2, 2, 3), (2, 3, 6, 7),
        (1, 4, 8, 9), (4, 4, 7, 9), (2, 6, 9, 11), (12, 16, 21, 29),
    ]
    for x, y, z, m in triples:
        assert accel_magnitude(float(x), float(y), float(z)) == float(m)
        assert accel_magnitude(float(-x), float(-y), float(-z)) == float(m)
    assert accel_magnitude(0.0, 0.0, 0.0) == 0.0

    # coordinate rounding consistency on 10,000 random coordinates: the
    # produced columns satisfy round(lat2, 1) = lat1 and round(lat1, 0) = lat0,
    # checked against an independent Decimal oracle
    n = 10_000
    rng = np.random.default_rng(2024)
    lat = rng.uniform(-90.0, 90.0, n)
    lon = rng.uniform(-180.0, 180.0, n)
    stream = AlignedStream(
        participant_id="oracle",
        start_sec=1_551_398_400,
        accel=np.tile([0.0, 0.0, 1.0], (n, 1)),
        gps=np.column_stack([lat, lon]),
        hr=np.full(n, 70.0),
    )
    X = feature_rows(stream, np.arange(n))
    cols = {name: X[:, i] for i, name in enumerate(FEATURE_NAMES)}
    for raw, c2, c1, c0 in ((lat, "lat2", "lat1", "lat0"), (lon, "lon2", "lon1", "lon0")):
        np.testing.assert_array_equal(cols[c2], _decimal_round(raw, 2))
        np.testing.assert_array_equal(cols[c1], _decimal_round(cols[c2], 1))
        np.testing.assert_array_equal(cols[c0], _decimal_round(cols[c1], 0))

    # clock components against the calendar on 1,000 random epochs
    epochs = np.random.default_rng(7).integers(0, 2_000_000_000, 1_000)
    for offset in (0, 330, -480):
        tz = timezone(timedelta(minutes=offset))
        for ts in epochs:
            expected = datetime.fromtimestamp(int(ts), tz)
            assert time_components(int(ts), offset) == (
                expected.hour, expected.minute, expected.second,
            )

    assert time.monotonic() - t0 < 1.0


def test_criterion_02_ridge_matches_least_squares():
    t0 = time.monotonic()
    rng = np.random.default_rng(12)

    for _ in range(50):
        n = int(rng.integers(20, 201))
        p = int(rng.integers(1, 12))
        X = rng.standard_normal((n, p))
        y = X @ rng.standard_normal(p) + rng.standard_normal(n)
        model = ridge_fit(make_matrix_like(X, y), alpha=0.0)
        beta = np.linalg.lstsq(np.column_stack([np.ones(n), X]), y, rcond=None)[0]
        np.testing.assert_allclose(model.state.raw_coefficients, beta[1:], rtol=0, atol=1e-8)
        intercept = predict(model, np.zeros((1, p)))[0]
        assert intercept == pytest.approx(beta[0], abs=1e-8)

    matrix = make_matrix(150, p=8, seed=13)
    previous = math.inf
    for alpha in (0.0, 0.1, 1.0, 10.0, 1e3, 1e12):
        norm = float(np.linalg.norm(ridge_fit(matrix, alpha=alpha).state.raw_coefficients))
        assert norm <= previous + 1e-12
        previous = norm

    assert time.monotonic() - t0 < 5.0


def make_matrix_like(X, y):
    n = len(y)
    return FeatureMatrix(
        X=np.asarray(X, dtype=np.float64),
        y=np.asarray(y, dtype=np.float64),
        participant_ids=np.full(n, "p000"),
        target_kind="bpm",
        timestamps=np.arange(n, dtype=np.int64),
    )


def test_criterion_03_svr_kkt_and_qp_oracle():
    t0 = time.monotonic()

    # KKT validity on 20 random instances
    for seed in range(20):
        rng = np.random.default_rng([20, seed])
        n = int(rng.integers(25, 60))
        p = int(rng.integers(1, 4))
        C = float(rng.uniform(0.5, 10.0))
        epsilon = float(rng.uniform(0.01, 0.2))
        X = rng.uniform(-2.0, 2.0, (n, p))
        y = np.sin(X[:, 0] * 2.0) + 0.1 * rng.standard_normal(n)
        model = svr_fit(make_matrix_like(X, y), C=C, epsilon=epsilon, tol=1e-4)
        state = model.state
        assert np.all(state.dual_coef >= -C - 1e-9)
        assert np.all(state.dual_coef <= C + 1e-9)
        residual = np.abs(predict(model, X) - y)
        support = set(state.support_indices.tolist())
        outside_tube = np.flatnonzero(residual > epsilon + 1e-3)
        assert set(outside_tube.tolist()) <= support

    # brute-force QP agreement on 20-point instances
    for seed in (31, 32, 33):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2.0, 2.0, (20, 2))
        y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
        model = svr_fit(make_matrix_like(X, y), C=5.0, epsilon=0.05, tol=1e-5)
        Xs = _standardize_like(model, X)
        beta, bias = qp_oracle(Xs, y, 5.0, 0.05, model.state.gamma)
        oracle_pred = rbf_kernel_matrix(Xs, Xs, model.state.gamma) @ beta + bias
        np.testing.assert_allclose(predict(model, X), oracle_pred, rtol=0, atol=1e-3)

    assert time.monotonic() - t0 < 30.0


def test_criterion_04_forest_determinism_and_bounds():
    t0 = time.monotonic()
    matrix = make_matrix(600, p=13, seed=14)
    probe = np.random.default_rng(15).uniform(-0.5, 1.5, (200, 13))

    one = forest_fit(matrix, n_trees=40, seed=9, threads=1)
    eight = forest_fit(matrix, n_trees=40, seed=9, threads=8)
    np.testing.assert_array_equal(predict(one, probe), predict(eight, probe))
    np.testing.assert_array_equal(predict(one, matrix.X), predict(eight, matrix.X))

    preds = predict(one, probe)
    assert preds.min() >= matrix.y.min()
    assert preds.max() <= matrix.y.max()

    gains = importance_split_gain(one.state)
    assert gains.sum() == pytest.approx(1.0, abs=1e-9)

    assert time.monotonic() - t0 < 10.0


def test_criterion_05_baseline_analytic():
    window, n = 1800, 6 * 3600
    a, b = 60.0, 0.003
    t = np.arange(n)
    ramp = a + b * t
    stream = AlignedStream(
        participant_id="ramp",
        start_sec=0,
        accel=np.tile([0.0, 0.0, 1.0], (n, 1)),
        gps=np.tile([40.0, -105.0], (n, 1)),
        hr=ramp,
    )
    result = baseline_interpolate(stream, window=window)
    # block k predicts the previous block's mean: a + b*((k-1)*W + (W-1)/2)
    blocks = result.timestamps // window
    expected = a + b * ((blocks - 1) * window + (window - 1) / 2.0)
    np.testing.assert_allclose(result.bpm, expected, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(result.timestamps, np.arange(window, n))

    flat = AlignedStream("flat", 0, stream.accel, stream.gps, np.full(n, 71.0))
    flat_result = baseline_interpolate(flat, window=window)
    assert rmse(flat.hr[flat_result.timestamps], flat_result.bpm) == 0.0


@pytest.fixture(scope="module")
def cohort_report():
    """Shared 12-participant, 7-day cohort evaluation (seed 42, defaults)."""
    cfg = SynthConfig(seed=42)
    streams = []
    for i in range(cfg.n_participants):
        p = generate_participant(cfg, i)
        streams.append(align_streams(p.accel, p.gps, p.hr, participant_id=p.participant_id))
    options = EvalOptions(seed=42, threads=4)
    t0 = time.monotonic()
    report = run_personalized(streams, DEFAULT_MODELS, options)
    t_personalized = time.monotonic() - t0
    t0 = time.monotonic()
    report = run_generalized(streams, DEFAULT_MODELS, options, report)
    t_generalized = time.monotonic() - t0
    return report, t_personalized, t_generalized


def test_criterion_06_forest_beats_other_models(cohort_report):
    report, t_personalized, _ = cohort_report
    forest_r2, forest_rmse = report.cross_participant_mean(SCOPE_PERSONALIZED, "forest")
    ridge_r2, ridge_rmse = report.cross_participant_mean(SCOPE_PERSONALIZED, "ridge")
    svr_r2, svr_rmse = report.cross_participant_mean(SCOPE_PERSONALIZED, "svr")
    _, baseline_rmse = report.cross_participant_mean(SCOPE_PERSONALIZED, "baseline")

    assert forest_r2 > ridge_r2
    assert forest_r2 > svr_r2
    assert forest_rmse < baseline_rmse
    assert ridge_rmse < baseline_rmse
    assert svr_rmse < baseline_rmse
    assert t_personalized < 300.0


def test_criterion_07_personalized_beats_generalized(cohort_report):
    report, t_personalized, t_generalized = cohort_report
    personalized_r2, _ = report.cross_participant_mean(SCOPE_PERSONALIZED, "forest")
    # generalized predictions are re-inverted to bpm per participant, making
    # the two scopes directly comparable; the pooled z-score view must agree
    generalized_bpm_r2, _ = report.cross_participant_mean(SCOPE_GENERALIZED, "forest")
    generalized_z_r2 = report.pooled_mean("forest").r2

    assert personalized_r2 > generalized_bpm_r2
    assert personalized_r2 > generalized_z_r2
    assert t_personalized + t_generalized < 600.0


def test_criterion_08_importance_ordering():
    t0 = time.monotonic()

    # circadian-dominated heart rate: one participant, no activity coupling,
    # plus an appended pure-noise column
    cfg = SynthConfig(seed=7, n_participants=1, activity_hr_gain=0.0)
    p = generate_participant(cfg, 0)
    stream = align_streams(p.accel, p.gps, p.hr, participant_id=p.participant_id)
    rows = complete_case_indices(stream)
    pick = np.random.default_rng([7, 1]).choice(len(rows), size=6_000, replace=False)
    pick.sort()
    matrix = build_feature_matrix(stream, indices=rows[pick])
    noise = np.random.default_rng([7, 2]).standard_normal(len(matrix))
    names = FEATURE_NAMES + ("noise",)
    with_noise = FeatureMatrix(
        X=np.column_stack([matrix.X, noise]),
        y=matrix.y,
        participant_ids=matrix.participant_ids,
        target_kind=matrix.target_kind,
        timestamps=matrix.timestamps,
    )
    model = forest_fit(with_noise, seed=7, threads=4)
    table = build_importance_table(model.state, with_noise, feature_names=names, seed=7)

    temporal = ("hour", "minute", "second")
    location = ("lat2", "lon2", "lat1", "lon1", "lat0", "lon0")
    index = {name: i for i, name in enumerate(names)}
    for column in ("split_gain", "permutation"):
        scores = getattr(table, column)
        best_temporal = max(scores[index[name]] for name in temporal)
        for name in location:
            assert best_temporal > scores[index[name]], (column, name)

    assert table.ranked("permutation")[-1][0] == "noise"
    assert table.ranked("permutation_raw")[-1][0] == "noise"

    assert time.monotonic() - t0 < 120.0


def test_criterion_09_gap_fill_integrity(tmp_path):
    t0 = time.monotonic()
    cfg = SynthConfig(seed=42, noise_std=0.0)
    errors = []
    for i in range(cfg.n_participants):
        p = generate_participant(cfg, i)
        kept, mask = inject_gaps(p.hr, GapPattern.nightly_nonwear(), seed=42)
        stream = align_streams(p.accel, p.gps, kept, participant_id=p.participant_id)
        rows = complete_case_indices(stream)
        pick = np.random.default_rng([42, 909]).choice(
            len(rows), size=min(10_000, len(rows)), replace=False
        )
        pick.sort()
        matrix = build_feature_matrix(stream, indices=rows[pick])
        model = forest_fit(matrix, seed=42, threads=4)

        observed_before = stream.hr.copy()
        result = fill_gaps(stream, model, gaps=mask)

        # every gap second has complete phone features here, so all are filled
        assert result.n_unfillable == 0
        np.testing.assert_array_equal(np.sort(result.timestamps), mask.seconds())
        # filling never touches the observed series
        np.testing.assert_array_equal(
            stream.hr.tobytes(), observed_before.tobytes()
        )
        errors.append(result.bpm - p.hr_truth[result.timestamps - stream.start_sec])

        if i == 0:
            # the merged output keeps observed seconds byte-identical
            out = tmp_path / "filled.csv"
            write_fill_csv(out, stream, result)
            merged = {}
            import csv as csv_mod

            with open(out, newline="") as fh:
                reader = csv_mod.reader(fh)
                next(reader)
                for ts, _pid, bpm, source in reader:
                    merged[int(ts)] = (bpm, source)
            for pos in np.flatnonzero(stream.hr_present):
                bpm_text, source = merged[stream.start_sec + int(pos)]
                assert source == "observed"
                assert bpm_text == repr(float(stream.hr[pos]))

    aggregate = float(np.sqrt(np.mean(np.concatenate(errors) ** 2)))
    assert aggregate < 3.0
    assert time.monotonic() - t0 < 180.0


def test_criterion_10_round_trip_stability(tmp_path, cohort3):
    # model save -> load -> predict, bit-identical for every predictor kind
    matrix = make_matrix(150, p=6, seed=40)
    probe = np.random.default_rng(41).uniform(0.0, 1.0, (60, 6))
    trained = [
        ridge_fit(matrix, alpha=0.7),
        svr_fit(matrix, C=2.0, epsilon=0.05),
        forest_fit(matrix, n_trees=10, seed=6),
    ]
    for model in trained:
        path = tmp_path / f"{model.spec.kind}.json"
        save_model(model, path)
        again = load_model(path)
        np.testing.assert_array_equal(predict(model, probe), predict(again, probe))

    # report export -> import, metric-identical
    report = run_personalized(
        cohort3[:2],
        (DEFAULT_MODELS[0],),  # ridge only: the round trip is what matters
        EvalOptions(seed=8, max_rows_per_participant=300),
    )
    report_path = tmp_path / "report.json"
    export_report(report, report_path)
    loaded = import_report(report_path)
    assert len(loaded.entries) == len(report.entries)
    for a, b in zip(report.entries, loaded.entries):
        assert vars(a) == vars(b)

    # aligned stream write -> read, frame-identical
    p = generate_participant(SynthConfig(seed=43, n_participants=1, duration=7_200), 0)
    kept, _ = inject_gaps(p.hr, GapPattern.random_dropout(0.2), seed=1)
    stream = align_streams(p.accel, p.gps, kept, participant_id=p.participant_id)
    csv_path = tmp_path / "aligned.csv"
    write_aligned_csv(stream, csv_path)
    again = read_aligned_csv(csv_path)
    assert again.participant_id == stream.participant_id
    assert again.start_sec == stream.start_sec
    np.testing.assert_array_equal(again.accel, stream.accel)
    np.testing.assert_array_equal(again.gps, stream.gps)
    np.testing.assert_array_equal(again.hr, stream.hr)
