"""Versioned JSON persistence for trained models.

Floats are written with full repr precision, so a saved model predicts
bit-identically after a load round trip.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..features import ZScoreParams
from .base import (
    BaselineState,
    ForestState,
    ModelSpec,
    RidgeState,
    SvrState,
    TrainedModel,
    Tree,
)

FORMAT_NAME = "hrfill-model"
FORMAT_VERSION = 1

_F64_TREE_FIELDS = ("threshold", "value", "gain")
_I64_TREE_FIELDS = ("feature", "left", "right", "n_node", "oob_indices")


def _state_payload(state) -> dict:
    if isinstance(state, RidgeState):
        return {
            "kind": "ridge",
            "coef": state.coef.tolist(),
            "intercept": state.intercept,
            "feature_means": state.feature_means.tolist(),
            "feature_scales": state.feature_scales.tolist(),
        }
    if isinstance(state, SvrState):
        return {
            "kind": "svr",
            "support_vectors": state.support_vectors.tolist(),
            "dual_coef": state.dual_coef.tolist(),
            "bias": state.bias,
            "gamma": state.gamma,
            "feature_means": state.feature_means.tolist(),
            "feature_scales": state.feature_scales.tolist(),
            "support_indices": state.support_indices.tolist(),
        }
    if isinstance(state, ForestState):
        trees = []
        for tree in state.trees:
            entry = {}
            for name in _I64_TREE_FIELDS + _F64_TREE_FIELDS:
                entry[name] = getattr(tree, name).tolist()
            trees.append(entry)
        return {"kind": "forest", "n_features": state.n_features, "trees": trees}
    if isinstance(state, BaselineState):
        return {"kind": "baseline", "window": state.window}
    raise TypeError(f"unknown state type {type(state).__name__}")


def _state_from_payload(payload: dict):
    kind = payload.get("kind")
    if kind == "ridge":
        return RidgeState(
            coef=np.asarray(payload["coef"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            feature_means=np.asarray(payload["feature_means"], dtype=np.float64),
            feature_scales=np.asarray(payload["feature_scales"], dtype=np.float64),
        )
    if kind == "svr":
        return SvrState(
            support_vectors=np.asarray(payload["support_vectors"], dtype=np.float64).reshape(
                len(payload["dual_coef"]), -1
            ),
            dual_coef=np.asarray(payload["dual_coef"], dtype=np.float64),
            bias=float(payload["bias"]),
            gamma=float(payload["gamma"]),
            feature_means=np.asarray(payload["feature_means"], dtype=np.float64),
            feature_scales=np.asarray(payload["feature_scales"], dtype=np.float64),
            support_indices=np.asarray(payload["support_indices"], dtype=np.int64),
        )
    if kind == "forest":
        trees = []
        for entry in payload["trees"]:
            fields = {}
            for name in _I64_TREE_FIELDS:
                fields[name] = np.asarray(entry[name], dtype=np.int64)
            for name in _F64_TREE_FIELDS:
                fields[name] = np.asarray(entry[name], dtype=np.float64)
            trees.append(Tree(**fields))
        return ForestState(trees=trees, n_features=int(payload["n_features"]))
    if kind == "baseline":
        return BaselineState(window=int(payload["window"]))
    raise DataError(f"model file has unknown state kind {kind!r}")


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Write a trained model to a JSON file."""
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": dataclasses.asdict(model.spec),
        "target_kind": model.target_kind,
        "feature_names": list(model.feature_names),
        "zscore_by_participant": {
            pid: {"mean": zp.mean, "std": zp.std}
            for pid, zp in sorted(model.zscore_by_participant.items())
        },
        "state": _state_payload(model.state),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    """Read a model written by save_model.

    Raises:
        DataError: the file is not a model file, or is from an unsupported
            format version.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise DataError(f"{path} is not a model file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(
            f"model file version {doc.get('version')!r} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        spec = ModelSpec(**doc["spec"])
        state = _state_from_payload(doc["state"])
        zscores = {
            pid: ZScoreParams(mean=float(entry["mean"]), std=float(entry["std"]))
            for pid, entry in doc.get("zscore_by_participant", {}).items()
        }
        return TrainedModel(
            spec=spec,
            state=state,
            target_kind=doc["target_kind"],
            feature_names=tuple(doc["feature_names"]),
            zscore_by_participant=zscores,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"model file {path} is malformed: {exc}") from exc
