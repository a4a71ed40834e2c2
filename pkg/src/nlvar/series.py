"""Raw series handling: standardization, lag embedding, CSV ingestion.

All operations are pure value transformations; inputs are never mutated and
returned objects own their arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadRangeError,
    ConstantSeriesError,
    DimensionMismatchError,
    SeriesTooShortError,
)

STD_FLOOR = 1e-12


@dataclass
class MultivariateSeries:
    """An m-dimensional series: rows are time steps, columns scalar series."""

    values: np.ndarray
    names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DimensionMismatchError("series values must be a 2-d array")
        n, m = self.values.shape
        if n < 1 or m < 1:
            raise DimensionMismatchError("series needs at least one row and one column")
        if len(self.names) != m:
            raise DimensionMismatchError(
                f"series has {m} columns but {len(self.names)} names"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains NaN or infinite values")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]


@dataclass
class NormStats:
    """Per-series location/scale computed on a training window."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionMismatchError("mean and std must be 1-d and equally long")
        if np.any(self.std <= 0):
            raise ConstantSeriesError("std entries must be strictly positive")


@dataclass
class SupervisedSet:
    """Lag-embedded input/output pairs.

    Input columns are grouped by source series, most recent observation
    first within each group; ``partition_map[j]`` lists the ``lag`` input
    columns holding the past of series ``j``.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    lag: int
    partition_map: list[list[int]]

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise DimensionMismatchError("inputs and outputs must be 2-d arrays")
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimensionMismatchError("inputs and outputs row counts differ")
        m = len(self.partition_map)
        if self.inputs.shape[1] != m * self.lag:
            raise DimensionMismatchError(
                f"expected {m * self.lag} input columns, got {self.inputs.shape[1]}"
            )

    @property
    def n_pairs(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_series(self) -> int:
        return len(self.partition_map)

    def subset(self, rows) -> "SupervisedSet":
        """Row-sliced copy sharing lag and partition structure."""
        rows = np.asarray(rows)
        return SupervisedSet(
            inputs=self.inputs[rows].copy(),
            outputs=self.outputs[rows].copy(),
            lag=self.lag,
            partition_map=[list(cols) for cols in self.partition_map],
        )


def standardize_fit(series: MultivariateSeries, train_len: int) -> NormStats:
    """Compute per-series mean/std over the first ``train_len`` rows.

    Std uses the unbiased (n-1) divisor. Raises ConstantSeriesError when a
    column is (numerically) constant over the window.
    """
    if not 2 <= train_len <= series.n_steps:
        raise BadRangeError(
            f"train_len must be in [2, {series.n_steps}], got {train_len}"
        )
    window = series.values[:train_len]
    mean = window.mean(axis=0)
    std = window.std(axis=0, ddof=1)
    flat = np.flatnonzero(std < STD_FLOOR)
    if flat.size:
        raise ConstantSeriesError(
            f"series {[series.names[j] for j in flat]} constant over the training window"
        )
    return NormStats(mean=mean, std=std)


def standardize_apply(
    series: MultivariateSeries, stats: NormStats, direction: str = "forward"
) -> MultivariateSeries:
    """Apply (or undo) the per-series affine rescaling."""
    if series.n_series != stats.mean.shape[0]:
        raise DimensionMismatchError(
            f"series has {series.n_series} columns, stats cover {stats.mean.shape[0]}"
        )
    if direction == "forward":
        values = (series.values - stats.mean) / stats.std
    elif direction == "inverse":
        values = series.values * stats.std + stats.mean
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return MultivariateSeries(values=values, names=list(series.names))


def lag_embed(series: MultivariateSeries, p: int) -> SupervisedSet:
    """Build one-step-ahead supervised pairs from ``p`` past observations.

    Pair t (t = 0..n_total-p-1) has output ``series[t+p]`` and inputs holding,
    for each series j, the values at times t+p-1, t+p-2, ..., t (most recent
    first), in columns ``j*p .. j*p+p-1``.
    """
    if p < 1:
        raise BadRangeError(f"lag must be positive, got {p}")
    n_total, m = series.values.shape
    if n_total <= p:
        raise SeriesTooShortError(
            f"need more than lag={p} steps, series has {n_total}"
        )
    n = n_total - p
    inputs = np.empty((n, m * p))
    for j in range(m):
        col = series.values[:, j]
        for k in range(p):
            inputs[:, j * p + k] = col[p - 1 - k : p - 1 - k + n]
    outputs = series.values[p:].copy()
    partition_map = [[j * p + k for k in range(p)] for j in range(m)]
    return SupervisedSet(inputs=inputs, outputs=outputs, lag=p, partition_map=partition_map)


def read_csv(path) -> MultivariateSeries:
    """Load a series from CSV: header row of names, one time step per row.

    Missing or non-numeric values are an error; no imputation is attempted.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [name.strip() for name in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(names)} values, got {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: missing or non-numeric value"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return MultivariateSeries(values=np.array(rows, dtype=float), names=names)


def write_csv(series: MultivariateSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])
