"""Versioned JSON serialization of fitted models.

One envelope for both model families, discriminated by "kind": the kernel
methods store the weight matrix, coefficients, kernel specs (with their
training normalization factors) and the training inputs needed to evaluate
the expansion; linear baselines store a dense coefficient matrix. Floats are
written with full round-trip precision.
"""

from __future__ import annotations

import json

import numpy as np

from . import baselines, solver
from .errors import ConfigError, UnsupportedKindError
from .kernels import KernelSpec, _regroup
from .series import NormStats

FORMAT_NAME = "nlvar-model"
FORMAT_VERSION = 1


def _stats_doc(stats: NormStats | None):
    if stats is None:
        return None
    return {"mean": [float(v) for v in stats.mean], "std": [float(v) for v in stats.std]}


def _stats_from(doc) -> NormStats | None:
    if doc is None:
        return None
    return NormStats(mean=np.asarray(doc["mean"]), std=np.asarray(doc["std"]))


def _matrix(x) -> list:
    return [[float(v) for v in row] for row in np.asarray(x)]


def model_to_dict(model) -> dict:
    if isinstance(model, solver.ModelFit):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": model.method,
            "lag": model.lag,
            "names": model.names,
            "norm_stats": _stats_doc(model.norm_stats),
            "lambda": [float(v) for v in model.lam],
            "kernels": [
                {
                    "kind": spec.kind,
                    "param": spec.param,
                    "partition": spec.partition,
                    "norm_factor": spec.norm_factor,
                }
                for spec in model.specs
            ],
            "weights_a": _matrix(model.A),
            "coefficients": _matrix(model.C),
            "training_inputs": _matrix(model.training_inputs),
        }
    if isinstance(model, baselines.BaselineFit):
        doc = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": model.kind,
            "lag": model.lag,
            "names": model.names,
            "norm_stats": _stats_doc(model.norm_stats),
            "lambda": None if model.lam is None else float(np.asarray(model.lam).ravel()[0]),
        }
        if model.kind == "nvar_full":
            doc["model"] = model_to_dict(model.inner)
        else:
            doc["coef"] = None if model.coef is None else _matrix(model.coef)
        return doc
    raise UnsupportedKindError(f"cannot serialize {type(model).__name__}")


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT_NAME:
        raise ConfigError("not an nlvar model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model version {doc.get('version')}")
    kind = doc["kind"]
    if kind in solver.KERNEL_METHODS:
        specs = [
            KernelSpec(
                kind=k["kind"],
                param=k["param"],
                partition=k["partition"],
                norm_factor=k["norm_factor"],
            )
            for k in doc["kernels"]
        ]
        return solver.ModelFit(
            method=kind,
            A=np.asarray(doc["weights_a"], dtype=float),
            C=np.asarray(doc["coefficients"], dtype=float),
            specs=specs,
            group_index=_regroup(specs),
            training_inputs=np.asarray(doc["training_inputs"], dtype=float),
            norm_stats=_stats_from(doc["norm_stats"]),
            lag=int(doc["lag"]),
            lam=np.asarray(doc["lambda"], dtype=float),
            names=doc["names"],
        )
    if kind in baselines.BASELINE_KINDS:
        inner = model_from_dict(doc["model"]) if kind == "nvar_full" else None
        coef = doc.get("coef")
        return baselines.BaselineFit(
            kind=kind,
            lag=int(doc["lag"]),
            coef=None if coef is None else np.asarray(coef, dtype=float),
            inner=inner,
            norm_stats=_stats_from(doc["norm_stats"]),
            lam=doc["lambda"],
            names=doc["names"],
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def predict_model(model, new_inputs) -> np.ndarray:
    """Standardized-space forecasts from either model family."""
    if isinstance(model, solver.ModelFit):
        return solver.predict(model, new_inputs)
    return baselines.predict_baseline(model, new_inputs)


def model_adjacency(model, threshold: float = solver.ADJ_ZERO_TOL) -> solver.AdjacencyMatrix:
    """Granger adjacency from either model family (sparse kinds only)."""
    if isinstance(model, solver.ModelFit):
        if model.method == "nvar":
            raise UnsupportedKindError("adjacency is undefined for the unpartitioned model")
        return solver.adjacency(model, threshold)
    return baselines.baseline_adjacency(model, threshold)
