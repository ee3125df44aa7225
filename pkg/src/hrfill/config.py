"""Run configuration: YAML in, validated dataclasses out.

Unknown keys are rejected rather than ignored, so a typo in a config file
fails loudly instead of silently running with defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import DataError
from .evaluate import EvalOptions
from .models import ModelSpec
from .synthgen import GapPattern, SynthConfig

DEFAULT_MODELS = (
    ModelSpec(kind="ridge"),
    ModelSpec(kind="svr"),
    ModelSpec(kind="forest"),
    ModelSpec(kind="baseline"),
)


@dataclass(frozen=True)
class EvalSection:
    """Evaluation knobs that are not shared run-wide."""

    n_folds: int = 5
    fold_policy: str = "shuffled"
    max_rows_per_participant: Optional[int] = 2000
    max_rows_pooled: Optional[int] = 4000
    baseline_window: int = 1800
    svr_tol: float = 1e-3
    svr_max_iter: int = 500_000
    importance: bool = False

    def __post_init__(self):
        if self.fold_policy not in ("shuffled", "blocked"):
            raise ValueError(
                f"fold_policy must be 'shuffled' or 'blocked', got {self.fold_policy!r}"
            )


@dataclass(frozen=True)
class FillSection:
    max_train_rows: Optional[int] = 10_000

    def __post_init__(self):
        if self.max_train_rows is not None and self.max_train_rows < 1:
            raise ValueError(f"max_train_rows must be >= 1 or null, got {self.max_train_rows}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    tz_offset_minutes: int = 0
    deviation_mode: str = "all"
    synth: SynthConfig = field(default_factory=SynthConfig)
    gaps: tuple[GapPattern, ...] = ()
    models: tuple[ModelSpec, ...] = DEFAULT_MODELS
    evaluation: EvalSection = field(default_factory=EvalSection)
    fill: FillSection = field(default_factory=FillSection)

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if not self.models:
            raise ValueError("models must not be empty")
        kinds = [m.kind for m in self.models]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate model kinds in config: {kinds}")

    def eval_options(self, **overrides) -> EvalOptions:
        """Merge run-wide and evaluation-section settings into EvalOptions."""
        kwargs = dict(
            n_folds=self.evaluation.n_folds,
            seed=self.seed,
            fold_policy=self.evaluation.fold_policy,
            deviation_mode=self.deviation_mode,
            tz_offset_minutes=self.tz_offset_minutes,
            max_rows_per_participant=self.evaluation.max_rows_per_participant,
            max_rows_pooled=self.evaluation.max_rows_pooled,
            baseline_window=self.evaluation.baseline_window,
            threads=self.threads,
            svr_tol=self.evaluation.svr_tol,
            svr_max_iter=self.evaluation.svr_max_iter,
            importance=self.evaluation.importance,
        )
        kwargs.update(overrides)
        return EvalOptions(**kwargs)


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise DataError(f"{where} must be a mapping, got {type(data).__name__}")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise DataError(f"unknown key(s) {unknown} in {where}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid {where}: {exc}") from exc


def config_from_mapping(data: dict, where: str = "config") -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise DataError(f"{where} must be a mapping, got {type(data).__name__}")
    data = dict(data)
    kwargs = {}
    if "synth" in data:
        synth = data.pop("synth") or {}
        if isinstance(synth, dict) and "hr_baseline_range" in synth:
            synth = dict(synth)
            rng = synth["hr_baseline_range"]
            if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
                raise DataError(f"{where}.synth.hr_baseline_range must be a [lo, hi] pair")
            synth["hr_baseline_range"] = (float(rng[0]), float(rng[1]))
        kwargs["synth"] = _build(SynthConfig, synth, f"{where}.synth")
    if "gaps" in data:
        gaps = data.pop("gaps")
        if gaps is None:
            kwargs["gaps"] = ()
        elif isinstance(gaps, dict):
            kwargs["gaps"] = (_build(GapPattern, gaps, f"{where}.gaps"),)
        elif isinstance(gaps, list):
            kwargs["gaps"] = tuple(
                _build(GapPattern, g, f"{where}.gaps[{i}]") for i, g in enumerate(gaps)
            )
        else:
            raise DataError(
                f"{where}.gaps must be null, a gap mapping, or a list of gap mappings"
            )
    if "models" in data:
        models = data.pop("models")
        if not isinstance(models, list):
            raise DataError(f"{where}.models must be a list of model mappings")
        kwargs["models"] = tuple(
            _build(ModelSpec, m, f"{where}.models[{i}]") for i, m in enumerate(models)
        )
    if "evaluation" in data:
        kwargs["evaluation"] = _build(EvalSection, data.pop("evaluation"), f"{where}.evaluation")
    if "fill" in data:
        kwargs["fill"] = _build(FillSection, data.pop("fill"), f"{where}.fill")

    allowed = {"seed", "threads", "tz_offset_minutes", "deviation_mode"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise DataError(f"unknown key(s) {unknown} in {where}")
    kwargs.update(data)
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid {where}: {exc}") from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load a YAML run configuration; None or an empty file gives defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DataError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return RunConfig()
    return config_from_mapping(data, where=str(path))


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def dump_config(config: RunConfig) -> str:
    """Render a config as YAML that load_config reads back unchanged."""
    doc = _plain(dataclasses.asdict(config))
    return yaml.safe_dump(doc, sort_keys=False)
