"""Synthetic benchmark generator, cross-validated hyperparameter search with
warm starts along the regularization path, hold-out evaluation, and the
end-to-end experiment runner behind the CLI.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, modelio, solver
from .errors import (
    BadRangeError,
    ConfigError,
    DimensionMismatchError,
    FoldTooSmallError,
)
from .grouplasso import SolverOptions, _solve_stacked
from .kernels import (
    DEFAULT_DICTIONARY,
    RANK_TOL,
    build_cross_stack,
    build_feature_stack,
    build_gram_stack,
    make_specs,
)
from .series import MultivariateSeries, SupervisedSet, lag_embed, read_csv, standardize_apply, standardize_fit

ALL_METHODS = ("mean", "lar", "lvarl2", "lvarl1", "nvar", "nvarl1", "nvarl12")

#: Methods whose fitted structure yields a Granger adjacency matrix.
SPARSE_METHODS = ("lvarl1", "nvarl1", "nvarl12")

#: Seed used for the repo's reference benchmark runs.
CANONICAL_SEED = 20

DEFAULT_LAG = 5
DEFAULT_HOLDOUT = 500

#: Iteration budgets for CV fits when no cv_options are given: candidate
#: penalties only need to be ranked, not solved to final-fit precision. The
#: alternating method pays a dense factorization per outer iteration, so its
#: CV budget is tighter still.
_CV_DEFAULT_OPTIONS = SolverOptions(max_iter=800, rel_tol=1e-6)
_CV_DEFAULT_OPTIONS_L12 = SolverOptions(max_iter=100, rel_tol=1e-5)


def default_psi() -> np.ndarray:
    """Filter matrix of the 5-dimensional benchmark process: two internally
    coupled blocks (series 1-3 and 4-5) with no dependence across blocks."""
    return np.array(
        [
            [0.7, 1.3, 0.0, 0.0, 0.0],
            [0.0, 0.6, -1.5, 0.0, 0.0],
            [0.0, -1.2, 1.46, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.6, 1.4],
            [0.0, 0.0, 0.0, 1.3, -0.5],
        ]
    )


@dataclass
class SyntheticSpec:
    """Benchmark process y_t = e_t + Psi e_{t-1} with recentred unit-variance
    exponential noise."""

    length: int
    seed: int = CANONICAL_SEED
    psi: np.ndarray | None = None

    def __post_init__(self):
        if self.psi is None:
            self.psi = default_psi()
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.ndim != 2 or self.psi.shape[0] != self.psi.shape[1]:
            raise DimensionMismatchError("psi must be a square matrix")
        if self.length < 2:
            raise BadRangeError("synthetic length must be at least 2")


def generate_synthetic(spec: SyntheticSpec) -> MultivariateSeries:
    """Draw the benchmark series, bit-reproducible for a given seed.

    Noise coordinates are Exponential(1) - 1 (zero mean, unit variance),
    sampled by inverse CDF -log(1-U) - 1 from a PCG64 uniform stream; one
    extra leading draw supplies e_0.
    """
    m = spec.psi.shape[0]
    rng = np.random.default_rng(spec.seed)
    u = rng.random((spec.length + 1, m))
    e = -np.log1p(-u) - 1.0
    values = e[1:] + e[:-1] @ spec.psi.T
    names = [f"y{j + 1}" for j in range(m)]
    return MultivariateSeries(values=values, names=names)


@dataclass
class GridSpec:
    """Logarithmic regularization grid 10^k * scale, k linearly spaced.

    scale defaults to sqrt(n_train_pairs) * (number of kernels or groups of
    the method); set it explicitly to override.
    """

    count: int = 15
    low_exp: float = -3.0
    high_exp: float = 4.0
    scale: float | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("grid count must be >= 1")
        if self.count > 1 and self.low_exp >= self.high_exp:
            raise ConfigError("grid low_exp must be below high_exp")

    def values(self, scale: float) -> np.ndarray:
        if self.count == 1:
            return np.array([10.0 ** self.low_exp * scale])
        exps = np.linspace(self.low_exp, self.high_exp, self.count)
        return 10.0**exps * scale


@dataclass
class EvalReport:
    mse: float
    mse_std: float
    per_step_errors: np.ndarray
    n_holdout: int
    method: str = ""
    lam: float | None = None


def scale_count(method: str, m: int, dictionary=DEFAULT_DICTIONARY) -> int:
    """Kernel or group count entering the grid scale for one method."""
    nk = len(dictionary)
    return {
        "nvarl1": m * nk,
        "nvar": nk,
        "nvarl12": m,
        "lvarl1": m,
        "lvarl2": m,
        "lar": 1,
        "mean": 1,
    }[method]


# ---------------------------------------------------------------------------
# per-method fit/predict engines used by the CV loop


class _MeanEngine:
    def prepare(self, sub: SupervisedSet):
        return sub.n_series

    def make_eval(self, ctx, X):
        return np.asarray(X, dtype=float)

    def fit_at(self, ctx, lam, warm):
        return None, warm

    def predict(self, ctx, state, eval_ctx):
        return np.zeros((eval_ctx.shape[0], ctx))


class _RidgeEngine:
    """lar (own lags only) and lvarl2 (all lags)."""

    def __init__(self, own_only: bool):
        self.own_only = own_only

    def prepare(self, sub: SupervisedSet):
        X, Y = sub.inputs, sub.outputs
        if self.own_only:
            per = []
            for j, cols in enumerate(sub.partition_map):
                Xj = X[:, cols]
                per.append((Xj.T @ Xj, Xj.T @ Y[:, j]))
            return ("lar", per, sub.partition_map, X.shape[1], sub.n_series)
        return ("lvarl2", X.T @ X, X.T @ Y)

    def make_eval(self, ctx, X):
        return np.asarray(X, dtype=float)

    def fit_at(self, ctx, lam, warm):
        if ctx[0] == "lar":
            _, per, part_map, ncols, m = ctx
            coef = np.zeros((ncols, m))
            for j, (G, b) in enumerate(per):
                coef[part_map[j], j] = baselines._ridge_solve(G, b, lam)
            return coef, warm
        _, G, B = ctx
        return baselines._ridge_solve(G, B, lam), warm

    def predict(self, ctx, coef, eval_ctx):
        return eval_ctx @ coef


class _GroupLassoEngine:
    """lvarl1: group lasso on raw lag columns, one group per input series."""

    def __init__(self, options: SolverOptions | None):
        self.options = options or SolverOptions()

    def prepare(self, sub: SupervisedSet):
        starts = np.array([cols[0] for cols in sub.partition_map])
        sizes = np.array([len(cols) for cols in sub.partition_map])
        B = np.ascontiguousarray(sub.inputs)
        return {"B": B, "starts": starts, "sizes": sizes, "Y": sub.outputs, "sigma": None}

    def make_eval(self, ctx, X):
        return np.asarray(X, dtype=float)

    def fit_at(self, ctx, lam, warm):
        B, Y = ctx["B"], ctx["Y"]
        m = Y.shape[1]
        warm = warm if warm is not None else [None] * m
        coef = np.zeros((B.shape[1], m))
        for s in range(m):
            w, _, _, _, ctx["sigma"] = _solve_stacked(
                B, ctx["starts"], ctx["sizes"], Y[:, s], lam, self.options,
                w0=warm[s], sigma=ctx["sigma"],
            )
            coef[:, s] = w
        return coef, list(coef.T)

    def predict(self, ctx, coef, eval_ctx):
        return eval_ctx @ coef


class _KernelEngine:
    """nvarl1 / nvar (l1 route on empirical features) and nvarl12."""

    def __init__(self, method: str, dictionary, options: SolverOptions | None,
                 feature_tol: float = RANK_TOL):
        self.method = method
        self.dictionary = dictionary
        self.options = options or SolverOptions()
        self.feature_tol = feature_tol

    def prepare(self, sub: SupervisedSet):
        partitions = [None] if self.method == "nvar" else list(range(sub.n_series))
        specs, _ = make_specs(partitions, self.dictionary)
        grams = build_gram_stack(sub.inputs, sub.partition_map, specs=specs)
        ctx = {
            "grams": grams,
            "inputs": sub.inputs,
            "partition_map": sub.partition_map,
            "Y": sub.outputs,
            "sigma": None,
        }
        if self.method != "nvarl12":
            feats = build_feature_stack(grams, self.feature_tol)
            sizes = np.array([phi.shape[1] for phi in feats.features])
            ctx["B"] = np.hstack(feats.features)
            ctx["starts"] = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
            ctx["sizes"] = sizes
        return ctx

    def make_eval(self, ctx, X):
        return build_cross_stack(ctx["grams"], ctx["inputs"], np.asarray(X, dtype=float),
                                 ctx["partition_map"])

    def fit_at(self, ctx, lam, warm):
        grams, Y = ctx["grams"], ctx["Y"]
        m = Y.shape[1]
        if self.method == "nvarl12":
            warm = warm if warm is not None else [None] * m
            A = np.zeros((grams.n_kernels, m))
            C = np.zeros((grams.n_train, m))
            new_warm = []
            for s in range(m):
                task = solver.solve_task_l12(grams, grams.group_index, Y[:, s], lam,
                                             warm=warm[s], opts=self.options)
                A[:, s], C[:, s] = task.a, task.c
                new_warm.append(task.a)
            return (A, C), new_warm
        kappa = 2.0 * math.sqrt(lam)
        warm = warm if warm is not None else [None] * m
        W = np.zeros((ctx["B"].shape[1], m))
        for s in range(m):
            w, _, _, _, ctx["sigma"] = _solve_stacked(
                ctx["B"], ctx["starts"], ctx["sizes"], Y[:, s], kappa,
                self.options, w0=warm[s], sigma=ctx["sigma"],
            )
            W[:, s] = w
        A = math.sqrt(lam) * np.sqrt(np.add.reduceat(W * W, ctx["starts"], axis=0))
        C = np.column_stack(
            [solver.solve_coefficients(grams, A[:, s], Y[:, s], lam) for s in range(m)]
        )
        return (A, C), list(W.T)

    def predict(self, ctx, state, eval_ctx):
        A, C = state
        preds = np.zeros((eval_ctx[0].shape[0], C.shape[1]))
        for d, block in enumerate(eval_ctx):
            if A[d].any():
                preds += (block @ C) * A[d][None, :]
        return preds


def _make_engine(method: str, dictionary, options, feature_tol=RANK_TOL):
    if method == "mean":
        return _MeanEngine()
    if method == "lar":
        return _RidgeEngine(own_only=True)
    if method == "lvarl2":
        return _RidgeEngine(own_only=False)
    if method == "lvarl1":
        return _GroupLassoEngine(options)
    if method in ("nvarl1", "nvarl12", "nvar"):
        return _KernelEngine(method, dictionary, options, feature_tol)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------


def cv_select(train: SupervisedSet, method: str, grid: GridSpec | None = None,
              folds: int = 5, dictionary=DEFAULT_DICTIONARY,
              options: SolverOptions | None = None,
              feature_tol: float = RANK_TOL) -> tuple[float, np.ndarray]:
    """Pick the regularization value by blocked cross-validation.

    Folds are contiguous time blocks. The grid is traversed from the largest
    value down, warm-starting every fit from the previous value's solution.
    The winner is the largest grid value whose mean validation MSE is within
    one standard error (over folds, at the minimizing value) of the minimum:
    differences below fold noise count as ties and break toward the larger
    penalty. Returns (lam_star, mean validation MSE per ascending value).
    """
    if method not in ALL_METHODS:
        raise ConfigError(f"unknown method {method!r}")
    if folds < 2:
        raise FoldTooSmallError("need at least 2 folds")
    grid = grid or GridSpec()
    n = train.n_pairs
    scale = grid.scale
    if scale is None:
        scale = math.sqrt(n) * scale_count(method, train.n_series, dictionary)
    lams = grid.values(scale)
    if grid.count == 1:
        return float(lams[0]), np.full(1, np.nan)
    if n < 2 * folds:
        raise FoldTooSmallError(f"{n} rows cannot make {folds} usable folds")

    engine = _make_engine(method, dictionary, options, feature_tol)
    blocks = np.array_split(np.arange(n), folds)
    errs = np.zeros((grid.count, folds))
    for f, val_rows in enumerate(blocks):
        train_rows = np.setdiff1d(np.arange(n), val_rows)
        ctx = engine.prepare(train.subset(train_rows))
        eval_ctx = engine.make_eval(ctx, train.inputs[val_rows])
        Y_val = train.outputs[val_rows]
        warm = None
        for k in range(grid.count - 1, -1, -1):
            state, warm = engine.fit_at(ctx, float(lams[k]), warm)
            preds = engine.predict(ctx, state, eval_ctx)
            errs[k, f] = float(np.mean((Y_val - preds) ** 2))
    curve = errs.mean(axis=1)
    k_min = len(curve) - 1 - int(np.argmin(curve[::-1]))
    noise = float(errs[k_min].std(ddof=1)) / math.sqrt(folds)
    within = np.flatnonzero(curve <= curve[k_min] + noise)
    best = int(within.max())
    return float(lams[best]), curve


def evaluate_holdout(predict_fn, holdout: SupervisedSet, method: str = "",
                     lam: float | None = None) -> EvalReport:
    """Hold-out MSE of a standardized-space predictor.

    Per-step error is ||y_t - yhat_t||^2 / m; mse_std is the standard error
    of the mean over hold-out steps.
    """
    if holdout.n_pairs < 1:
        raise BadRangeError("holdout set is empty")
    preds = np.asarray(predict_fn(holdout.inputs), dtype=float)
    if preds.shape != holdout.outputs.shape:
        raise DimensionMismatchError(
            f"predictions {preds.shape} vs outputs {holdout.outputs.shape}"
        )
    per_step = np.mean((holdout.outputs - preds) ** 2, axis=1)
    n = per_step.shape[0]
    mse_std = float(per_step.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EvalReport(
        mse=float(per_step.mean()),
        mse_std=mse_std,
        per_step_errors=per_step,
        n_holdout=n,
        method=method,
        lam=lam,
    )


# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything needed for a benchmark-style run."""

    train: int
    methods: tuple = ALL_METHODS
    synthetic: SyntheticSpec | None = None
    csv_path: str | None = None
    holdout: int = DEFAULT_HOLDOUT
    lag: int = DEFAULT_LAG
    dictionary: tuple = DEFAULT_DICTIONARY
    grid: GridSpec = field(default_factory=GridSpec)
    folds: int = 5
    lam: float | None = None
    options: SolverOptions | None = None
    # CV fits only rank candidate penalties, so they run with a lighter
    # iteration budget than the final fit; pass explicit cv_options to change
    cv_options: SolverOptions | None = None
    feature_tol: float = RANK_TOL
    out_dir: str | None = None
    save_models: bool = False

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; valid: {list(ALL_METHODS)}")
        if (self.synthetic is None) == (self.csv_path is None):
            raise ConfigError("exactly one data source (synthetic or csv) is required")
        if self.train < self.lag + 2:
            raise ConfigError(f"train={self.train} too small for lag={self.lag}")
        if self.holdout < 1:
            raise ConfigError("holdout must be >= 1")


def experiment_config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a run config from the JSON document accepted by the CLI."""
    data = doc.get("data", {})
    synthetic = None
    csv_path = None
    if "synthetic" in data:
        s = data["synthetic"]
        synthetic = SyntheticSpec(
            length=int(s.get("length", doc.get("train", 0) + doc.get("holdout", DEFAULT_HOLDOUT))),
            seed=int(s.get("seed", CANONICAL_SEED)),
            psi=np.asarray(s["psi"], dtype=float) if s.get("psi") is not None else None,
        )
    if "csv" in data:
        csv_path = data["csv"]
    grid_doc = doc.get("grid", {})
    grid = GridSpec(
        count=int(grid_doc.get("count", 15)),
        low_exp=float(grid_doc.get("low_exp", -3.0)),
        high_exp=float(grid_doc.get("high_exp", 4.0)),
        scale=grid_doc.get("scale"),
    )
    solver_doc = doc.get("solver", {})
    options = SolverOptions(**solver_doc) if solver_doc else None
    dictionary = tuple(
        (kind, param) for kind, param in doc.get("kernels", DEFAULT_DICTIONARY)
    )
    return ExperimentConfig(
        train=int(doc["train"]),
        methods=tuple(doc.get("methods", ALL_METHODS)),
        synthetic=synthetic,
        csv_path=csv_path,
        holdout=int(doc.get("holdout", DEFAULT_HOLDOUT)),
        lag=int(doc.get("lag", DEFAULT_LAG)),
        dictionary=dictionary,
        grid=grid,
        folds=int(doc.get("folds", 5)),
        lam=doc.get("lambda"),
        options=options,
        feature_tol=float(doc.get("feature_tol", RANK_TOL)),
        out_dir=doc.get("out_dir"),
        save_models=bool(doc.get("save_models", False)),
    )


def split_experiment_data(series: MultivariateSeries, train: int, holdout: int,
                          lag: int):
    """Standardize on the training window and embed; returns
    (norm_stats, train_set, holdout_set).

    The training set embeds only the first `train` raw rows; the hold-out
    pairs are the `holdout` pairs whose outputs immediately follow them (the
    first few look back across the boundary, as a live forecaster would).
    """
    needed = train + holdout
    if series.n_steps < needed:
        raise BadRangeError(
            f"series has {series.n_steps} steps, need train+holdout={needed}"
        )
    stats = standardize_fit(series, train)
    window = MultivariateSeries(values=series.values[:needed].copy(), names=list(series.names))
    std = standardize_apply(window, stats, "forward")
    sup = lag_embed(std, lag)
    train_set = sup.subset(np.arange(0, train - lag))
    holdout_set = sup.subset(np.arange(train - lag, train - lag + holdout))
    return stats, train_set, holdout_set


def fit_method(method: str, train_set, lam, stats=None, names=None,
               dictionary=DEFAULT_DICTIONARY, options: SolverOptions | None = None,
               feature_tol: float = RANK_TOL):
    """Fit one method at a fixed lambda; returns (model, predict_fn)."""
    if method in ("nvarl1", "nvarl12"):
        fit_cfg = solver.FitConfig(method=method, lam=lam, dictionary=dictionary,
                                   feature_tol=feature_tol, options=options)
        model = solver.fit(train_set, fit_cfg, norm_stats=stats, names=names)
        return model, (lambda X: solver.predict(model, X))
    kind = "nvar_full" if method == "nvar" else method
    model = baselines.fit_baseline(kind, train_set, lam, dictionary=dictionary,
                                   options=options, norm_stats=stats, names=names)
    return model, (lambda X: baselines.predict_baseline(model, X))


def _model_adjacency(method: str, model):
    if method in ("nvarl1", "nvarl12"):
        return solver.adjacency(model)
    if method == "lvarl1":
        return baselines.baseline_adjacency(model)
    return None


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full protocol: standardize, embed, CV per method, final fit,
    hold-out evaluation, adjacency export. Per-method failures are recorded
    and do not abort the run. Returns the report dict (also written to
    out_dir with CSV artifacts when configured)."""
    if config.synthetic is not None:
        series = generate_synthetic(config.synthetic)
    else:
        series = read_csv(config.csv_path)
    stats, train_set, holdout_set = split_experiment_data(
        series, config.train, config.holdout, config.lag
    )

    report: dict = {
        "train": config.train,
        "holdout": config.holdout,
        "lag": config.lag,
        "folds": config.folds,
        "names": list(series.names),
        "methods": {},
    }
    adjacencies: dict = {}
    models: dict = {}
    for method in config.methods:
        entry: dict = {"status": "ok"}
        started = time.perf_counter()
        try:
            if config.lam is not None:
                lam = float(config.lam)
                entry["cv_curve"] = None
            elif method == "mean":
                lam = 0.0
                entry["cv_curve"] = None
            else:
                cv_opts = config.cv_options
                if cv_opts is None and config.options is not None:
                    cv_opts = config.options
                if cv_opts is None:
                    cv_opts = _CV_DEFAULT_OPTIONS_L12 if method == "nvarl12" else _CV_DEFAULT_OPTIONS
                lam, curve = cv_select(
                    train_set, method, config.grid, config.folds,
                    dictionary=config.dictionary, options=cv_opts,
                    feature_tol=config.feature_tol,
                )
                entry["cv_curve"] = [float(v) for v in curve]
            model, predict_fn = fit_method(
                method, train_set, lam, stats=stats, names=series.names,
                dictionary=config.dictionary, options=config.options,
                feature_tol=config.feature_tol,
            )
            result = evaluate_holdout(predict_fn, holdout_set, method=method, lam=lam)
            entry.update(
                lam=lam,
                mse=result.mse,
                mse_std=result.mse_std,
                n_holdout=result.n_holdout,
                seconds=time.perf_counter() - started,
            )
            adj = _model_adjacency(method, model)
            if adj is not None:
                adjacencies[method] = adj
                entry["adjacency"] = [[float(v) for v in row] for row in adj.values]
            models[method] = model
        except Exception as exc:  # record and continue with the other methods
            entry = {"status": "failed", "error": f"{type(exc).__name__}: {exc}",
                     "seconds": time.perf_counter() - started}
        report["methods"][method] = entry

    if config.out_dir is not None:
        _write_artifacts(report, adjacencies, models, config)
    return report


def _write_artifacts(report, adjacencies, models, config: ExperimentConfig):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    lines = ["method,mse,mse_std,lambda,status"]
    for method, entry in report["methods"].items():
        if entry["status"] == "ok":
            lines.append(
                f"{method},{entry['mse']!r},{entry['mse_std']!r},{entry['lam']!r},ok"
            )
        else:
            lines.append(f"{method},,,,failed")
    (out / "mse_table.csv").write_text("\n".join(lines) + "\n")
    for method, adj in adjacencies.items():
        rows = [",".join(report["names"])]
        rows += [",".join(repr(float(v)) for v in row) for row in adj.values]
        (out / f"adjacency_{method}.csv").write_text("\n".join(rows) + "\n")
    if config.save_models:
        for method, model in models.items():
            modelio.save_model(model, out / f"model_{method}.json")
