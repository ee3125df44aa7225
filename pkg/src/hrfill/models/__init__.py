"""Predictors: ridge, RBF epsilon-SVR, CART random forest, moving-average baseline."""

from __future__ import annotations

from ..features import FeatureMatrix
from .base import (
    MODEL_KINDS,
    BaselineState,
    ForestState,
    ModelSpec,
    RidgeState,
    SvrState,
    TrainedModel,
    Tree,
    predict,
)
from .baseline import BaselineResult, baseline_fit, baseline_interpolate
from .forest import (
    ImportanceTable,
    build_importance_table,
    forest_fit,
    importance_permutation_oob,
    importance_split_gain,
    predict_forest,
)
from .io import load_model, save_model
from .ridge import ridge_fit
from .svr import svr_fit


def fit_model(
    spec: ModelSpec,
    matrix: FeatureMatrix,
    threads: int = 1,
    svr_tol: float = 1e-3,
    svr_max_iter: int = 500_000,
) -> TrainedModel:
    """Train the predictor named by spec.kind on the given matrix."""
    if spec.kind == "ridge":
        return ridge_fit(matrix, spec=spec)
    if spec.kind == "svr":
        return svr_fit(matrix, spec=spec, tol=svr_tol, max_iter=svr_max_iter)
    if spec.kind == "forest":
        return forest_fit(matrix, spec=spec, threads=threads)
    if spec.kind == "baseline":
        return baseline_fit(spec=spec, target_kind=matrix.target_kind)
    raise ValueError(f"unknown model kind {spec.kind!r}")


__all__ = [
    "MODEL_KINDS",
    "BaselineResult",
    "BaselineState",
    "ForestState",
    "ImportanceTable",
    "ModelSpec",
    "RidgeState",
    "SvrState",
    "TrainedModel",
    "Tree",
    "baseline_fit",
    "baseline_interpolate",
    "build_importance_table",
    "fit_model",
    "forest_fit",
    "importance_permutation_oob",
    "importance_split_gain",
    "load_model",
    "predict",
    "predict_forest",
    "ridge_fit",
    "save_model",
    "svr_fit",
]
