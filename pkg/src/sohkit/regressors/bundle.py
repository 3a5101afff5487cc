"""Self-describing JSON persistence for trained models.

A bundle records the model kind, its learned parameters (flattened arrays
with shapes), standardization statistics, selected feature names, the
recalibration map and the seed. Floats survive the JSON round trip exactly
(repr-based encoding), so reloaded models predict bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError

FORMAT_VERSION = 1
MODEL_KINDS = ("brr", "gpr", "rf", "dnne")


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": True, "shape": list(obj.shape), "data": obj.ravel().tolist()}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if obj.get("__array__"):
            return np.asarray(obj["data"], dtype=float).reshape(obj["shape"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


@dataclass
class ModelBundle:
    """Everything needed to reproduce a trained model's predictions."""

    kind: str
    params: dict
    hyperparams: dict
    standardization: dict  # {"mean": array, "std": array, "columns": [...]}
    feature_names: list[str]
    recalibration: dict | None = None  # {"knots_x": array, "knots_y": array}
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "params": _encode(self.params),
            "hyperparams": _encode(self.hyperparams),
            "standardization": _encode(self.standardization),
            "feature_names": list(self.feature_names),
            "recalibration": _encode(self.recalibration),
            "seed": self.seed,
            "meta": _encode(self.meta),
        }
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise DataError(f"bundle file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid model bundle") from exc
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported bundle format {doc.get('format_version')!r}")
        return cls(
            kind=doc["kind"],
            params=_decode(doc["params"]),
            hyperparams=_decode(doc["hyperparams"]),
            standardization=_decode(doc["standardization"]),
            feature_names=doc["feature_names"],
            recalibration=_decode(doc["recalibration"]),
            seed=doc["seed"],
            meta=_decode(doc["meta"]),
        )
