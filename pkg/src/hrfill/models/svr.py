"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual problem is solved by sequential minimal optimization over the
stacked 2n-variable form (n "up" multipliers, n "down" multipliers), picking
the maximal-violating pair each round. The inner loop is numba-compiled.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ConvergenceError, DataError
from ..features import FeatureMatrix
from .base import ModelSpec, SvrState, TrainedModel, feature_names_for, standardize_fit

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 500_000

# Dense-kernel training memory grows with n^2; past this the caller should
# subsample rows instead.
MAX_TRAIN_ROWS = 20_000


@njit(cache=True, nogil=True)
def _smo_kernel(K, y, C, eps, tol, max_iter):
    n = y.shape[0]
    z = np.zeros(2 * n, np.float64)
    G = np.empty(2 * n, np.float64)
    for i in range(n):
        G[i] = eps - y[i]
        G[n + i] = eps + y[i]

    bound = 1e-12 * C
    it = 0
    gap = np.inf
    m_val = -np.inf
    M_val = np.inf
    while True:
        m_val = -np.inf
        M_val = np.inf
        m_idx = -1
        M_idx = -1
        for s in range(2 * n):
            d = 1.0 if s < n else -1.0
            zs = z[s]
            v = -d * G[s]
            if (d > 0.0 and zs < C) or (d < 0.0 and zs > 0.0):
                if v > m_val:
                    m_val = v
                    m_idx = s
            if (d < 0.0 and zs < C) or (d > 0.0 and zs > 0.0):
                if v < M_val:
                    M_val = v
                    M_idx = s
        gap = m_val - M_val
        if gap <= tol or it >= max_iter:
            break

        i_ = m_idx
        j_ = M_idx
        ii = i_ % n
        jj = j_ % n
        di = 1.0 if i_ < n else -1.0
        dj = 1.0 if j_ < n else -1.0
        a = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
        if a < 1e-12:
            a = 1e-12
        lam = gap / a
        if di > 0.0:
            room_i = C - z[i_]
        else:
            room_i = z[i_]
        if dj > 0.0:
            room_j = z[j_]
        else:
            room_j = C - z[j_]
        if lam > room_i:
            lam = room_i
        if lam > room_j:
            lam = room_j

        z[i_] += di * lam
        z[j_] -= dj * lam
        for t in range(n):
            dk = lam * (K[t, ii] - K[t, jj])
            G[t] += dk
            G[n + t] -= dk
        it += 1

    nfree = 0
    bsum = 0.0
    for s in range(2 * n):
        if bound < z[s] < C - bound:
            d = 1.0 if s < n else -1.0
            bsum += -d * G[s]
            nfree += 1
    if nfree > 0:
        b = bsum / nfree
    else:
        b = 0.5 * (m_val + M_val)

    beta = np.empty(n, np.float64)
    for i in range(n):
        beta[i] = z[i] - z[n + i]
    return beta, b, it, gap


def rbf_kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(Xs: np.ndarray) -> float:
    """Kernel width 1 / (p * pooled variance) on the standardized features."""
    var = float(Xs.var())
    p = Xs.shape[1]
    if var < 1e-12:
        return 1.0 / p
    return 1.0 / (p * var)


def svr_fit(
    matrix: FeatureMatrix,
    C: float = 1.0,
    epsilon: float = 0.1,
    spec: ModelSpec | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> TrainedModel:
    """Train epsilon-SVR by SMO on the dense RBF kernel.

    Optimization stops when the largest Karush-Kuhn-Tucker violation falls
    below tol. Points whose final dual coefficient is (numerically) nonzero
    are kept as support vectors.

    Args:
        matrix: training rows and targets.
        C: box constraint on each dual variable, > 0.
        epsilon: insensitive-tube half-width in target units, >= 0.
        spec: optional full spec to record on the model; its C/epsilon win.
        tol: KKT violation tolerance for the stopping rule.
        max_iter: cap on pair updates before giving up.

    Raises:
        DataError: fewer than 2 rows, or more than the dense kernel supports.
        ConvergenceError: the violation gap is still above tol at max_iter.
    """
    if spec is None:
        spec = ModelSpec(kind="svr", C=C, epsilon=epsilon)
    else:
        C = spec.C
        epsilon = spec.epsilon
    X = matrix.X
    y = matrix.y
    n = X.shape[0]
    if n < 2:
        raise DataError(f"SVR needs at least 2 training rows, got {n}")
    if n > MAX_TRAIN_ROWS:
        raise DataError(
            f"SVR training builds a dense {n}x{n} kernel; cap rows at {MAX_TRAIN_ROWS} "
            "(subsample before fitting)"
        )
    means, scales = standardize_fit(X)
    Xs = (X - means) / scales
    gamma = default_gamma(Xs)
    K = rbf_kernel_matrix(Xs, Xs, gamma)

    beta, b, iters, gap = _smo_kernel(
        K, np.ascontiguousarray(y, dtype=np.float64), float(C), float(epsilon), float(tol), int(max_iter)
    )
    if gap > tol:
        raise ConvergenceError(
            f"SMO stopped after {iters} iterations with violation gap {gap:.3e} > tol {tol:.0e}",
            residual=float(gap),
            iterations=int(iters),
        )

    sv = np.flatnonzero(np.abs(beta) > 1e-12)
    if len(sv) == 0:
        # All residuals inside the tube; the model is the constant b.
        sv = np.array([0], dtype=np.int64)
        beta = np.zeros(n)
    state = SvrState(
        support_vectors=np.ascontiguousarray(Xs[sv]),
        dual_coef=beta[sv].copy(),
        bias=float(b),
        gamma=gamma,
        feature_means=means,
        feature_scales=scales,
        support_indices=sv.astype(np.int64),
    )
    return TrainedModel(
        spec=spec,
        state=state,
        target_kind=matrix.target_kind,
        feature_names=feature_names_for(X.shape[1]),
    )
