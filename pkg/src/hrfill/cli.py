"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import csv as csv_module
import dataclasses
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config
from .errors import DataError, NumericError
from .evaluate import (
    EvaluationReport,
    FillResult,
    export_report,
    export_trace_rows,
    fill_gaps,
    render_report,
    run_generalized,
    run_personalized,
    write_fill_csv,
)
from .features import build_feature_matrix, complete_case_indices, write_feature_csv, zscore_fit
from .ingest import (
    AlignedStream,
    align_streams,
    detect_gaps,
    parse_channel_file,
    read_aligned_csv,
    write_aligned_csv,
)
from .models import (
    ModelSpec,
    baseline_interpolate,
    build_importance_table,
    fit_model,
    forest_fit,
    load_model,
    save_model,
)
from .synthgen import GapPattern, generate_participant, inject_gaps, write_participant_dir

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(version=__version__, prog_name="hrfill")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML run configuration.")
@click.option("--seed", type=int, default=None, help="Override the configured random seed.")
@click.option("--threads", type=int, default=None, help="Override the configured worker-thread count.")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug logging.")
@click.pass_context
def cli(ctx, config_path, seed, threads, verbose):
    """Estimate and fill gaps in wrist heart-rate streams from phone sensors."""
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(config_path)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if threads is not None:
        overrides["threads"] = threads
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    ctx.obj = cfg


@cli.group("config")
def config_group():
    """Configuration helpers."""


@config_group.command("print-defaults")
@click.pass_obj
def config_print_defaults(cfg: RunConfig):
    """Print the effective configuration as YAML."""
    click.echo(dump_config(cfg), nl=False)


@cli.command()
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory; one subdirectory per participant.")
@click.option("--participants", type=int, default=None, help="Override synth.n_participants.")
@click.option("--duration", type=int, default=None, help="Override synth.duration (seconds).")
@click.option("--gap-kind", type=click.Choice(["none", "random", "nightly", "battery"]), default=None,
              help="Gap pattern for hr.csv; overrides the config's gaps section.")
@click.option("--gap-dropout-p", type=float, default=0.1, show_default=True)
@click.option("--gap-start-hour", type=float, default=23.0, show_default=True)
@click.option("--gap-hours", type=float, default=8.0, show_default=True)
@click.option("--gap-depletion-day", type=int, default=5, show_default=True)
@click.pass_obj
def simulate(cfg: RunConfig, out_dir, participants, duration, gap_kind,
             gap_dropout_p, gap_start_hour, gap_hours, gap_depletion_day):
    """Generate a synthetic cohort as raw channel CSVs."""
    synth = cfg.synth
    synth_overrides = {"seed": cfg.seed}
    if participants is not None:
        synth_overrides["n_participants"] = participants
    if duration is not None:
        synth_overrides["duration"] = duration
    try:
        synth = dataclasses.replace(synth, **synth_overrides)
    except ValueError as exc:
        raise DataError(f"invalid simulate options: {exc}") from exc

    patterns = list(cfg.gaps)
    if gap_kind == "none":
        patterns = []
    elif gap_kind is not None:
        try:
            patterns = [
                GapPattern(
                    kind=gap_kind,
                    dropout_p=gap_dropout_p,
                    start_hour=gap_start_hour,
                    hours=gap_hours,
                    depletion_day=gap_depletion_day,
                )
            ]
        except ValueError as exc:
            raise DataError(f"invalid gap options: {exc}") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(synth.n_participants):
        part = generate_participant(synth, i)
        hr_records = None
        gaps = None
        if patterns:
            hr_records, gaps = inject_gaps(part.hr, patterns, seed=synth.seed,
                                           tz_offset_minutes=cfg.tz_offset_minutes)
        write_participant_dir(part, out / part.participant_id, hr_records=hr_records, gaps=gaps)
        gap_note = f", {gaps.total_seconds()} gap seconds" if gaps is not None else ""
        click.echo(f"{part.participant_id}: {synth.duration} s{gap_note} -> {out / part.participant_id}")


@cli.command()
@click.option("--accel", "accel_path", type=click.Path(), required=True)
@click.option("--gps", "gps_path", type=click.Path(), required=True)
@click.option("--hr", "hr_path", type=click.Path(), required=True)
@click.option("--participant", "participant", required=True, help="Participant id recorded in the output.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Aligned CSV path.")
def align(accel_path, gps_path, hr_path, participant, out_path):
    """Align raw channel CSVs onto the common 1 Hz grid."""
    parsed = {}
    for channel, path in (("accel", accel_path), ("gps", gps_path), ("hr", hr_path)):
        result = parse_channel_file(path, channel)
        if result.malformed:
            click.echo(f"{channel}: {result.malformed}/{result.total_rows} malformed rows skipped", err=True)
        parsed[channel] = result.records
    stream = align_streams(parsed["accel"], parsed["gps"], parsed["hr"], participant_id=participant)
    write_aligned_csv(stream, out_path)
    gaps = detect_gaps(stream)
    click.echo(
        f"{participant}: {len(stream)} grid seconds, "
        f"{int(stream.hr_present.sum())} with heart rate, "
        f"{gaps.total_seconds()} gap seconds in {len(gaps.intervals)} runs -> {out_path}"
    )


@cli.command()
@click.option("--aligned", "aligned_path", type=click.Path(), required=True, help="Aligned CSV from `align`.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Feature CSV path.")
@click.option("--target", type=click.Choice(["bpm", "zscore"]), default="bpm", show_default=True)
@click.pass_obj
def featurize(cfg: RunConfig, aligned_path, out_path, target):
    """Build the model feature matrix from an aligned stream."""
    stream = read_aligned_csv(aligned_path)
    zscore = None
    if target == "zscore":
        rows = complete_case_indices(stream)
        if len(rows) == 0:
            raise DataError("no complete-case rows; cannot fit z-score parameters")
        zscore = zscore_fit(stream.hr[rows])
    matrix = build_feature_matrix(
        stream,
        target_kind=target,
        zscore=zscore,
        deviation_mode=cfg.deviation_mode,
        tz_offset_minutes=cfg.tz_offset_minutes,
    )
    write_feature_csv(matrix, out_path)
    click.echo(f"{stream.participant_id}: {len(matrix)} feature rows -> {out_path}")


@cli.command()
@click.option("--aligned", "aligned_path", type=click.Path(), required=True)
@click.option("--model", "kind", type=click.Choice(["ridge", "svr", "forest", "baseline"]), required=True)
@click.option("--target", type=click.Choice(["bpm", "zscore"]), default="bpm", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Model JSON path.")
@click.option("--max-rows", type=int, default=None,
              help="Subsample training rows (default: fill.max_train_rows from config).")
@click.pass_obj
def train(cfg: RunConfig, aligned_path, kind, target, out_path, max_rows):
    """Train one model on one participant's aligned stream."""
    stream = read_aligned_csv(aligned_path)
    spec = next((m for m in cfg.models if m.kind == kind), None)
    if spec is None:
        spec = ModelSpec(kind=kind)
    spec = dataclasses.replace(spec, seed=cfg.seed)

    zscores = {}
    zscore = None
    if target == "zscore":
        rows = complete_case_indices(stream)
        if len(rows) == 0:
            raise DataError("no complete-case rows; cannot fit z-score parameters")
        zscore = zscore_fit(stream.hr[rows])
        zscores[stream.participant_id] = zscore

    if kind == "baseline":
        model = fit_model(spec, _tiny_matrix(stream, cfg, target, zscore))
    else:
        rows = complete_case_indices(stream)
        cap = max_rows if max_rows is not None else cfg.fill.max_train_rows
        if cap is not None and len(rows) > cap:
            rng = np.random.default_rng([cfg.seed, 909])
            pick = rng.choice(len(rows), size=cap, replace=False)
            pick.sort()
            rows = rows[pick]
        matrix = build_feature_matrix(
            stream,
            target_kind=target,
            zscore=zscore,
            deviation_mode=cfg.deviation_mode,
            tz_offset_minutes=cfg.tz_offset_minutes,
            indices=rows,
        )
        model = fit_model(
            spec,
            matrix,
            threads=cfg.threads,
            svr_tol=cfg.evaluation.svr_tol,
            svr_max_iter=cfg.evaluation.svr_max_iter,
        )
    model.zscore_by_participant.update(zscores)
    save_model(model, out_path)
    click.echo(f"{kind} model on {stream.participant_id} ({target} target) -> {out_path}")


def _tiny_matrix(stream, cfg, target, zscore):
    """Minimal matrix so baseline models can flow through fit_model."""
    rows = complete_case_indices(stream)
    if len(rows) == 0:
        raise DataError("stream has no complete-case rows")
    return build_feature_matrix(
        stream,
        target_kind=target,
        zscore=zscore,
        deviation_mode=cfg.deviation_mode,
        tz_offset_minutes=cfg.tz_offset_minutes,
        indices=rows[:2],
    )


def _load_streams(data_dir: Path) -> list[AlignedStream]:
    """Load a cohort: subdirectories of channel CSVs, or aligned CSV files."""
    streams = []
    subdirs = sorted(p for p in data_dir.iterdir() if p.is_dir())
    for sub in subdirs:
        if not (sub / "hr.csv").exists():
            continue
        channels = {}
        for channel in ("accel", "gps", "hr"):
            path = sub / f"{channel}.csv"
            channels[channel] = parse_channel_file(path, channel).records if path.exists() else None
        streams.append(
            align_streams(channels["accel"], channels["gps"], channels["hr"], participant_id=sub.name)
        )
    if not streams:
        for path in sorted(data_dir.glob("*.csv")):
            streams.append(read_aligned_csv(path))
    if not streams:
        raise DataError(
            f"{data_dir} holds neither participant subdirectories with channel CSVs "
            "nor aligned CSV files"
        )
    return streams


@cli.command()
@click.option("--data", "data_dir", type=click.Path(), required=True,
              help="Cohort directory (participant subdirectories or aligned CSVs).")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Report JSON path.")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Also write flat metrics CSV.")
@click.option("--trace", "trace_path", type=click.Path(), default=None, help="Also write per-row predictions CSV.")
@click.option("--scope", type=click.Choice(["both", "personalized", "generalized"]),
              default="both", show_default=True)
@click.option("--importance/--no-importance", default=None,
              help="Compute feature importances (default: config evaluation.importance).")
@click.pass_obj
def evaluate(cfg: RunConfig, data_dir, out_path, csv_path, trace_path, scope, importance):
    """Cross-validate all configured models on a cohort."""
    streams = _load_streams(Path(data_dir))
    overrides = {"collect_trace": trace_path is not None}
    if importance is not None:
        overrides["importance"] = importance
    options = cfg.eval_options(**overrides)
    report = EvaluationReport()
    if scope in ("both", "personalized"):
        run_personalized(streams, cfg.models, options, report)
    if scope in ("both", "generalized"):
        run_generalized(streams, cfg.models, options, report)
    export_report(report, out_path, csv_path)
    if trace_path is not None:
        export_trace_rows(report, trace_path)
    click.echo(render_report(report), nl=False)
    click.echo(f"report -> {out_path}")


@cli.command()
@click.option("--aligned", "aligned_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Optional CSV for the table.")
@click.option("--max-rows", type=int, default=None, help="Subsample rows before fitting.")
@click.pass_obj
def importance(cfg: RunConfig, aligned_path, out_path, max_rows):
    """Fit a forest on one stream and print both feature-importance views."""
    stream = read_aligned_csv(aligned_path)
    rows = complete_case_indices(stream)
    cap = max_rows if max_rows is not None else cfg.fill.max_train_rows
    if cap is not None and len(rows) > cap:
        rng = np.random.default_rng([cfg.seed, 808])
        pick = rng.choice(len(rows), size=cap, replace=False)
        pick.sort()
        rows = rows[pick]
    matrix = build_feature_matrix(
        stream,
        deviation_mode=cfg.deviation_mode,
        tz_offset_minutes=cfg.tz_offset_minutes,
        indices=rows,
    )
    spec = next((m for m in cfg.models if m.kind == "forest"), ModelSpec(kind="forest"))
    spec = dataclasses.replace(spec, seed=cfg.seed)
    model = forest_fit(matrix, spec=spec, threads=cfg.threads)
    table = build_importance_table(model.state, matrix, seed=cfg.seed)
    click.echo(f"{'feature':<12} {'split_gain':>11} {'permutation':>12}")
    for name, score in table.ranked("split_gain"):
        i = table.feature_names.index(name)
        click.echo(f"{name:<12} {score:>11.4f} {table.permutation[i]:>12.6f}")
    if out_path is not None:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv_module.writer(fh)
            writer.writerow(["feature", "split_gain", "permutation", "permutation_raw"])
            for i, name in enumerate(table.feature_names):
                writer.writerow(
                    [name, repr(float(table.split_gain[i])), repr(float(table.permutation[i])),
                     repr(float(table.permutation_raw[i]))]
                )
        click.echo(f"table -> {out_path}")


@cli.command()
@click.option("--aligned", "aligned_path", type=click.Path(), required=True)
@click.option("--model", "model_path", type=click.Path(), required=True, help="Model JSON from `train`.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Filled series CSV.")
@click.pass_obj
def fill(cfg: RunConfig, aligned_path, model_path, out_path):
    """Predict heart rate inside a stream's gaps and write the merged series."""
    stream = read_aligned_csv(aligned_path)
    model = load_model(model_path)
    gaps = detect_gaps(stream)
    if model.spec.kind == "baseline":
        result_b = baseline_interpolate(stream, window=model.spec.baseline_window)
        covered = np.isin(result_b.timestamps, gaps.seconds())
        result = FillResult(
            timestamps=result_b.timestamps[covered],
            bpm=result_b.bpm[covered],
            n_unfillable=gaps.total_seconds() - int(covered.sum()),
        )
    else:
        result = fill_gaps(
            stream,
            model,
            gaps=gaps,
            deviation_mode=cfg.deviation_mode,
            tz_offset_minutes=cfg.tz_offset_minutes,
        )
    write_fill_csv(out_path, stream, result)
    click.echo(
        f"{stream.participant_id}: {gaps.total_seconds()} gap seconds, "
        f"{len(result)} filled, {result.n_unfillable} unfillable -> {out_path}"
    )


def main(argv=None) -> int:
    """Console entry point with stable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except NumericError as exc:
        click.echo(f"numeric error: {exc}", err=True)
        return 3
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
