"""Closed-form ridge regression on standardized features."""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import NumericError
from ..features import FeatureMatrix
from .base import ModelSpec, RidgeState, TrainedModel, feature_names_for, standardize_fit


def ridge_fit(matrix: FeatureMatrix, alpha: float = 1.0, spec: ModelSpec | None = None) -> TrainedModel:
    """Fit ridge regression by solving the penalized normal equations.

    Features are standardized to zero mean and unit scale and the target is
    centered, so the penalty treats every column alike and the intercept is
    left unpenalized. With alpha = 0 this is plain least squares and fails on
    rank-deficient designs.

    Args:
        matrix: training rows and targets.
        alpha: L2 penalty on the standardized coefficients, >= 0.
        spec: optional full spec to record on the model; its alpha wins.

    Returns:
        TrainedModel with a RidgeState.

    Raises:
        NumericError: the penalized Gram matrix is not positive definite
            (collinear features with alpha = 0).
    """
    if spec is None:
        spec = ModelSpec(kind="ridge", alpha=alpha)
    else:
        alpha = spec.alpha
    X = matrix.X
    y = matrix.y
    means, scales = standardize_fit(X)
    Xs = (X - means) / scales
    y_mean = float(y.mean())

    p = X.shape[1]
    gram = Xs.T @ Xs + alpha * np.eye(p)
    rhs = Xs.T @ (y - y_mean)
    # Cholesky can "succeed" on a singular Gram matrix when rounding noise
    # produces a tiny positive pivot, so near-singularity is checked directly.
    evals = np.linalg.eigvalsh(gram)
    if evals[0] <= evals[-1] * 1e-12:
        raise NumericError("ridge normal equations are singular; increase alpha above zero")
    try:
        w = cho_solve(cho_factor(gram), rhs)
    except LinAlgError as exc:
        raise NumericError(
            "ridge normal equations are singular; increase alpha above zero"
        ) from exc

    state = RidgeState(
        coef=w,
        intercept=y_mean,
        feature_means=means,
        feature_scales=scales,
    )
    return TrainedModel(
        spec=spec,
        state=state,
        target_kind=matrix.target_kind,
        feature_names=feature_names_for(X.shape[1]),
    )
