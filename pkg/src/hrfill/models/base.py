"""Model specifications, trained-model containers, and the shared predict surface."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..features import FEATURE_NAMES, N_FEATURES, ZScoreParams

MODEL_KINDS = ("ridge", "svr", "forest", "baseline")


def feature_names_for(p: int) -> tuple[str, ...]:
    """The canonical schema when the width matches it, generic names otherwise."""
    if p == N_FEATURES:
        return FEATURE_NAMES
    return tuple(f"f{i}" for i in range(p))

DEFAULT_ALPHA = 1.0
DEFAULT_C = 1.0
DEFAULT_EPSILON = 0.1
DEFAULT_N_TREES = 100
DEFAULT_MIN_LEAF = 5
DEFAULT_BASELINE_WINDOW = 1800


@dataclass(frozen=True)
class ModelSpec:
    """Hyperparameters for one predictor.

    Defaults are conventional values, not tuned ones; every field is
    configurable from the run configuration.
    """

    kind: str
    alpha: float = DEFAULT_ALPHA  # ridge L2 penalty
    C: float = DEFAULT_C  # SVR box constraint
    epsilon: float = DEFAULT_EPSILON  # SVR tube half-width, in target units
    n_trees: int = DEFAULT_N_TREES
    max_depth: Optional[int] = None  # None = unlimited
    min_leaf: int = DEFAULT_MIN_LEAF
    seed: int = 0
    baseline_window: int = DEFAULT_BASELINE_WINDOW  # seconds

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.C <= 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.baseline_window <= 0:
            raise ValueError(f"baseline_window must be > 0, got {self.baseline_window}")


@dataclass
class RidgeState:
    """Closed-form ridge solution over standardized features."""

    coef: np.ndarray  # (p,) coefficients in standardized feature space
    intercept: float  # prediction at the training feature means
    feature_means: np.ndarray
    feature_scales: np.ndarray

    @property
    def raw_coefficients(self) -> np.ndarray:
        """Coefficients expressed on the unstandardized features."""
        return self.coef / self.feature_scales

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - np.sum(self.coef * self.feature_means / self.feature_scales))


@dataclass
class SvrState:
    """RBF epsilon-SVR solution (support vectors stored standardized)."""

    support_vectors: np.ndarray  # (m, p)
    dual_coef: np.ndarray  # (m,) alpha - alpha*, each in [-C, C]
    bias: float
    gamma: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    support_indices: np.ndarray  # rows of the training matrix that are SVs


@dataclass
class Tree:
    """One CART regression tree in flat-array form; feature < 0 marks a leaf."""

    feature: np.ndarray  # (nodes,) int64
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int64
    right: np.ndarray  # (nodes,) int64
    value: np.ndarray  # (nodes,) float64, node training mean
    gain: np.ndarray  # (nodes,) float64, SSE reduction of the node's split
    n_node: np.ndarray  # (nodes,) int64, training rows reaching the node
    oob_indices: np.ndarray  # (k,) int64, training rows outside the bootstrap


@dataclass
class ForestState:
    trees: list[Tree]
    n_features: int


@dataclass
class BaselineState:
    window: int  # seconds


ModelState = RidgeState | SvrState | ForestState | BaselineState


@dataclass
class TrainedModel:
    """A fitted predictor: spec + state + the feature schema it was trained on."""

    spec: ModelSpec
    state: ModelState
    target_kind: str
    feature_names: tuple[str, ...] = FEATURE_NAMES
    # Per-participant standardization captured at fit time, so z-score
    # predictions can be inverted to bpm later (e.g. by `fill`).
    zscore_by_participant: dict[str, ZScoreParams] = field(default_factory=dict)


def _standardized(X: np.ndarray, means: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return (X - means) / scales


def standardize_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Training means and scales; constant columns get scale 1 so they map to 0."""
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales < 1e-12, 1.0, scales)
    return means, scales


def _check_schema(model: TrainedModel, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ValueError(
            f"feature schema mismatch: model expects {len(model.feature_names)} columns, "
            f"got array of shape {X.shape}"
        )


def predict(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    """Predict one target value per feature row.

    Baseline models predict from the time axis, not from feature rows; use
    baseline_interpolate for them.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    _check_schema(model, rows)
    state = model.state
    if isinstance(state, RidgeState):
        Xs = _standardized(rows, state.feature_means, state.feature_scales)
        return Xs @ state.coef + state.intercept
    if isinstance(state, SvrState):
        Xs = _standardized(rows, state.feature_means, state.feature_scales)
        sq = (
            np.sum(Xs**2, axis=1)[:, None]
            + np.sum(state.support_vectors**2, axis=1)[None, :]
            - 2.0 * Xs @ state.support_vectors.T
        )
        K = np.exp(-state.gamma * np.maximum(sq, 0.0))
        return K @ state.dual_coef + state.bias
    if isinstance(state, ForestState):
        from .forest import predict_forest

        return predict_forest(state, rows)
    raise ValueError("baseline models predict from frames; use baseline_interpolate")
