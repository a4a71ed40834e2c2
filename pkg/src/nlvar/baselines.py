"""Comparison models: training mean, univariate ridge AR, ridge VAR,
group-lasso linear Granger, and the unpartitioned sparse kernel model.

All baselines consume the same lag embedding and standardization as the main
method and predict in standardized space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import solver
from .errors import DimensionMismatchError, SingularSystemError, UnsupportedKindError
from .grouplasso import GroupedProblem, SolverOptions, solve_group_lasso
from .kernels import DEFAULT_DICTIONARY
from .series import NormStats, SupervisedSet
from .solver import AdjacencyMatrix, FitConfig, ModelFit, normalize_adjacency

BASELINE_KINDS = ("mean", "lar", "lvarl2", "lvarl1", "nvar_full")


@dataclass
class BaselineFit:
    """A fitted baseline; linear kinds carry a dense (m*p x m) coefficient
    matrix (rows ordered like the embedded input columns), nvar_full wraps a
    full kernel model."""

    kind: str
    lag: int
    coef: np.ndarray | None = None
    inner: ModelFit | None = None
    norm_stats: NormStats | None = None
    lam: float | np.ndarray | None = None
    names: list[str] | None = None


def _ridge_solve(G: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    A = G + lam * np.eye(G.shape[0])
    try:
        return scipy.linalg.solve(A, b, assume_a="pos", check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"normal equations singular at lam={lam}; design may be rank deficient"
        ) from exc


def fit_baseline(kind: str, train: SupervisedSet, lam: float = 0.0,
                 dictionary=DEFAULT_DICTIONARY, options: SolverOptions | None = None,
                 norm_stats: NormStats | None = None, names: list[str] | None = None) -> BaselineFit:
    """Fit one baseline kind at a fixed regularization value."""
    if kind not in BASELINE_KINDS:
        raise UnsupportedKindError(f"unknown baseline kind {kind!r}")
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    X, Y = train.inputs, train.outputs
    m, p = train.n_series, train.lag

    if kind == "mean":
        return BaselineFit(kind=kind, lag=p, norm_stats=norm_stats, names=names)

    if kind == "lar":
        coef = np.zeros((m * p, m))
        for j, cols in enumerate(train.partition_map):
            Xj = X[:, cols]
            w = _ridge_solve(Xj.T @ Xj, Xj.T @ Y[:, j], lam)
            coef[cols, j] = w
        return BaselineFit(kind=kind, lag=p, coef=coef, norm_stats=norm_stats,
                           lam=lam, names=names)

    if kind == "lvarl2":
        coef = _ridge_solve(X.T @ X, X.T @ Y, lam)
        return BaselineFit(kind=kind, lag=p, coef=coef, norm_stats=norm_stats,
                           lam=lam, names=names)

    if kind == "lvarl1":
        blocks = [np.ascontiguousarray(X[:, cols]) for cols in train.partition_map]
        coef = np.zeros((m * p, m))
        shared_stacked = None
        shared_sigma = None
        for s in range(m):
            problem = GroupedProblem(design_blocks=blocks, target=Y[:, s], penalty=lam)
            if shared_stacked is not None:
                problem._stacked = shared_stacked
                problem._sigma = shared_sigma
            sol = solve_group_lasso(problem, opts=options)
            shared_stacked, shared_sigma = problem._stacked, problem._sigma
            for j, cols in enumerate(train.partition_map):
                coef[cols, s] = sol.weights[j]
        return BaselineFit(kind=kind, lag=p, coef=coef, norm_stats=norm_stats,
                           lam=lam, names=names)

    # nvar_full: the l1 kernel path on the whole input vector (one partition)
    config = FitConfig(method="nvar", lam=lam, dictionary=dictionary, options=options)
    inner = solver.fit(train, config, norm_stats=norm_stats, names=names)
    return BaselineFit(kind=kind, lag=p, inner=inner, norm_stats=norm_stats,
                       lam=lam, names=names)


def predict_baseline(fit: BaselineFit, new_inputs) -> np.ndarray:
    """Standardized-space forecasts for lag-embedded input rows."""
    X = np.asarray(new_inputs, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if fit.kind == "nvar_full":
        return solver.predict(fit.inner, X)
    if fit.kind == "mean":
        m = X.shape[1] // fit.lag
        return np.zeros((X.shape[0], m))
    if X.shape[1] != fit.coef.shape[0]:
        raise DimensionMismatchError(
            f"inputs have {X.shape[1]} columns, model expects {fit.coef.shape[0]}"
        )
    return X @ fit.coef


def baseline_adjacency(fit: BaselineFit, threshold: float = solver.ADJ_ZERO_TOL) -> AdjacencyMatrix:
    """Granger graph of the group-lasso linear model: entry (j, s) is the l2
    norm of series j's lag coefficients in output s's predictor."""
    if fit.kind != "lvarl1":
        raise UnsupportedKindError(f"adjacency is only defined for lvarl1, not {fit.kind!r}")
    mp, m = fit.coef.shape
    p = fit.lag
    raw = np.zeros((mp // p, m))
    for j in range(mp // p):
        block = fit.coef[j * p : (j + 1) * p, :]
        raw[j] = np.linalg.norm(block, axis=0)
    return AdjacencyMatrix(values=normalize_adjacency(raw, threshold), names=fit.names)
