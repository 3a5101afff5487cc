"""Bagged regression forest with infinitesimal-jackknife variance.

Trees are grown with CART variance-reduction splits (no depth limit, one
sample per leaf, ceil(d/3) features per split). Bootstrap resampling is done
here rather than inside the library forest so the per-tree membership counts
n_ib are available for the IJ estimator:

    V_hat(x) = sum_i cov_b(n_ib, t_b(x))^2  -  (n / B^2) sum_b (t_b - t_bar)^2

with the Monte-Carlo bias correction subtracted and the result clamped at a
positive floor (the uncorrected estimator can go negative).
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from ..errors import DataError, NumericalError

VARIANCE_FLOOR = 1e-12
DEFAULT_TREES = 1500


class JackknifeForest:
    """Random forest regressor with IJ-based predictive variance."""

    def __init__(self, n_trees: int = DEFAULT_TREES, seed: int = 0):
        if n_trees < 2:
            raise DataError("need at least 2 trees to estimate covariance")
        self.n_trees = n_trees
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NumericalError("non-finite training inputs")
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        max_features = max(1, math.ceil(d / 3))

        self.trees_ = []
        counts = np.zeros((n, self.n_trees), dtype=float)
        for b in range(self.n_trees):
            idx = rng.integers(0, n, size=n)
            np.add.at(counts[:, b], idx, 1.0)
            tree = DecisionTreeRegressor(
                max_features=max_features,
                min_samples_leaf=1,
                random_state=int(rng.integers(0, 2**31 - 1)),
            )
            tree.fit(X[idx], y[idx])
            self.trees_.append(tree)
        self.counts_ = counts
        self.n_train_ = n
        # Kept for bundle persistence: the forest re-fits from (X, y, seed).
        self.X_train_copy_ = X.copy()
        self.y_train_copy_ = y.copy()
        self.y_min_ = float(y.min())
        self.y_max_ = float(y.max())
        return self

    def _tree_matrix(self, X) -> np.ndarray:
        """(n_queries, B) matrix of per-tree predictions."""
        X = np.asarray(X, dtype=float)
        return np.column_stack([t.predict(X) for t in self.trees_])

    def predict(self, X):
        """Ensemble mean and bias-corrected IJ variance per row."""
        preds = self._tree_matrix(X)
        mu = preds.mean(axis=1)
        var = infinitesimal_jackknife_variance(self.counts_, preds)
        return mu, var


def infinitesimal_jackknife_variance(counts: np.ndarray, tree_preds: np.ndarray) -> np.ndarray:
    """IJ variance from bootstrap membership counts and per-tree predictions.

    counts: (n_train, B) bootstrap multiplicities; tree_preds: (n_queries, B).
    Covariances use the 1/B convention; the bias correction subtracts
    (n/B^2) * sum_b (t_b - t_bar)^2 per query.
    """
    counts = np.asarray(counts, dtype=float)
    tree_preds = np.asarray(tree_preds, dtype=float)
    n, n_b = counts.shape
    if tree_preds.shape[1] != n_b:
        raise DataError("tree prediction count does not match bootstrap count")
    cc = counts - counts.mean(axis=1, keepdims=True)     # (n, B)
    tc = tree_preds - tree_preds.mean(axis=1, keepdims=True)  # (q, B)
    cov = (tc @ cc.T) / n_b                              # (q, n)
    raw = (cov ** 2).sum(axis=1)
    correction = (n / n_b ** 2) * (tc ** 2).sum(axis=1)
    return np.clip(raw - correction, VARIANCE_FLOOR, None)
