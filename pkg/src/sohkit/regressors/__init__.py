"""Four regressors behind one interface: fit a matrix, predict Gaussians.

BRR, GPR and the deep ensemble consume standardized features; the forest
consumes raw features. ``predict_bundle`` applies the bundle's stored
standardization accordingly and the recalibration map when present.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..uncertainty import RecalibrationMap
from .brr import BayesianRidge
from .bundle import ModelBundle
from .dnne import DeepEnsemble, hidden_sizes
from .forest import JackknifeForest
from .gpr import GaussianProcess

STANDARDIZED_KINDS = ("brr", "gpr", "dnne")

__all__ = [
    "BayesianRidge",
    "GaussianProcess",
    "JackknifeForest",
    "DeepEnsemble",
    "ModelBundle",
    "hidden_sizes",
    "fit_model",
    "build_bundle",
    "predict_bundle",
]


def fit_model(kind: str, X, y, hyperparams: dict | None = None, seed: int = 0, groups=None):
    """Train one model kind and return the fitted estimator."""
    hp = dict(hyperparams or {})
    if kind == "brr":
        return BayesianRidge(**hp).fit(X, y)
    if kind == "gpr":
        return GaussianProcess(**hp).fit(X, y)
    if kind == "rf":
        return JackknifeForest(seed=seed, **hp).fit(X, y)
    if kind == "dnne":
        return DeepEnsemble(seed=seed, **hp).fit(X, y, groups=groups)
    raise ConfigError(f"unknown model kind {kind!r}")


def build_bundle(kind: str, model, hyperparams: dict, standardization: dict,
                 feature_names: list[str], seed: int = 0,
                 recalibration: dict | None = None, meta: dict | None = None) -> ModelBundle:
    if kind == "rf":
        params = {"X": model_training_matrix(model), "y": model.y_train_copy_,
                  "n_trees": model.n_trees}
        meta = dict(meta or {})
    else:
        params = model.params()
    return ModelBundle(
        kind=kind,
        params=params,
        hyperparams=hyperparams,
        standardization=standardization,
        feature_names=feature_names,
        recalibration=recalibration,
        seed=seed,
        meta=meta or {},
    )


def model_training_matrix(model: JackknifeForest) -> np.ndarray:
    return model.X_train_copy_


def model_from_bundle(bundle: ModelBundle):
    """Reconstruct the estimator recorded in a bundle."""
    if bundle.kind == "brr":
        return BayesianRidge.from_params(bundle.params)
    if bundle.kind == "gpr":
        return GaussianProcess.from_params(bundle.params)
    if bundle.kind == "dnne":
        return DeepEnsemble.from_params(bundle.params, seed=bundle.seed)
    if bundle.kind == "rf":
        # Trees are not serialized; the forest re-fits deterministically
        # from the stored training matrix and seed.
        model = JackknifeForest(n_trees=int(bundle.params["n_trees"]), seed=bundle.seed)
        return model.fit(bundle.params["X"], bundle.params["y"])
    raise ConfigError(f"unknown model kind {bundle.kind!r}")


def predict_bundle(bundle: ModelBundle, X, model=None, recalibrate: bool = True):
    """Gaussian (mu, sigma) predictions for raw feature rows.

    ``model`` may pass a pre-reconstructed estimator to avoid repeated
    forest re-fits.
    """
    X = np.asarray(X, dtype=float)
    if bundle.kind in STANDARDIZED_KINDS:
        mean = np.asarray(bundle.standardization["mean"], dtype=float)
        std = np.asarray(bundle.standardization["std"], dtype=float)
        X = (X - mean) / std
    if model is None:
        model = model_from_bundle(bundle)
    mu, var = model.predict(X)
    sigma = np.sqrt(var)
    if recalibrate and bundle.recalibration is not None:
        rmap = RecalibrationMap(bundle.recalibration["knots_x"], bundle.recalibration["knots_y"])
        sigma = sigma * rmap.sigma_scale
    return mu, sigma
