"""Dataset wire format and fit artifacts.

A dataset file is JSON Lines: line 1 is a header object carrying the feature
schema, each following line is one observation:

    {"schema": 1, "feature_names": [...], "similarity_mask": [...], ...}
    {"id": "obs-0", "items": [{"id": "item-0", "x": [...], "chosen": true}, ...]}

Floats are serialized with Python's shortest round-trip representation, so
parse(serialize(dataset)) reproduces every value exactly. Parse errors report
the 1-based line number.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Dataset, Observation, Standardization
from .exceptions import DataError
from .kernel import Assortment, ModelParams

SCHEMA_VERSION = 1


def _header_dict(dataset: Dataset) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "feature_names": list(dataset.feature_names),
        "similarity_mask": list(dataset.similarity_mask),
        "quality_mask": list(dataset.quality_mask) if dataset.quality_mask is not None else None,
        "lengthscale_groups": (
            list(dataset.lengthscale_groups) if dataset.lengthscale_groups is not None else None
        ),
        "standardize_features": list(dataset.standardize_features),
        "standardization": (
            None
            if dataset.standardization is None
            else {
                "mean": dataset.standardization.mean.tolist(),
                "sd": dataset.standardization.sd.tolist(),
            }
        ),
    }


def serialize_dataset(dataset: Dataset) -> str:
    lines = [json.dumps(_header_dict(dataset))]
    for obs in dataset.observations:
        chosen = set(obs.chosen)
        items = [
            {"id": item_id, "x": [float(v) for v in row], "chosen": idx in chosen}
            for idx, (item_id, row) in enumerate(zip(obs.assortment.ids, obs.assortment.features))
        ]
        lines.append(json.dumps({"id": obs.id, "items": items}))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(serialize_dataset(dataset), encoding="utf-8")


def parse_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DataError("dataset file is empty (expected a header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"line 1: invalid JSON header: {exc}") from exc
    if not isinstance(header, dict) or "feature_names" not in header:
        raise DataError("line 1: header must be an object with 'feature_names'")
    std = None
    if header.get("standardization"):
        std = Standardization(
            mean=np.asarray(header["standardization"]["mean"], dtype=float),
            sd=np.asarray(header["standardization"]["sd"], dtype=float),
        )
    observations = []
    n_features = len(header["feature_names"])
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: invalid JSON: {exc}") from exc
        try:
            items = rec["items"]
            ids = tuple(str(it["id"]) for it in items)
            X = np.asarray([it["x"] for it in items], dtype=float)
            chosen = tuple(i for i, it in enumerate(items) if it["chosen"])
            obs = Observation(id=str(rec["id"]), assortment=Assortment(X, ids), chosen=chosen)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"line {lineno}: malformed observation: {exc}") from exc
        if X.shape[1] != n_features:
            raise DataError(
                f"line {lineno}: observation has {X.shape[1]} features, header declares {n_features}"
            )
        observations.append(obs)
    return Dataset(
        observations=observations,
        feature_names=tuple(header["feature_names"]),
        similarity_mask=tuple(header.get("similarity_mask") or ()),
        quality_mask=(
            tuple(header["quality_mask"]) if header.get("quality_mask") is not None else None
        ),
        lengthscale_groups=(
            tuple(header["lengthscale_groups"])
            if header.get("lengthscale_groups") is not None
            else None
        ),
        standardize_features=tuple(header.get("standardize_features") or ()),
        standardization=std,
    )


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Fit artifacts
# ---------------------------------------------------------------------------


def params_to_dict(params: ModelParams) -> dict:
    return {
        "beta": params.beta.tolist(),
        "log_lengthscales": params.log_lengthscales.tolist(),
        "similarity_mask": list(params.similarity_mask),
        "quality_mask": list(params.quality_mask) if params.quality_mask is not None else None,
        "lengthscale_groups": (
            list(params.lengthscale_groups) if params.lengthscale_groups is not None else None
        ),
    }


def params_from_dict(payload: dict) -> ModelParams:
    return ModelParams(
        beta=np.asarray(payload["beta"], dtype=float),
        log_lengthscales=np.asarray(payload["log_lengthscales"], dtype=float),
        similarity_mask=tuple(payload["similarity_mask"]),
        quality_mask=tuple(payload["quality_mask"]) if payload.get("quality_mask") is not None else None,
        lengthscale_groups=(
            tuple(payload["lengthscale_groups"])
            if payload.get("lengthscale_groups") is not None
            else None
        ),
    )


def write_fit_artifact(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_fit_artifact(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"fit artifact {path}: invalid JSON: {exc}") from exc
