"""Exact Gaussian process regression with an RBF kernel.

k(x, x') = signal_variance * exp(-||x - x'||^2 / (2 l^2)) plus
noise_variance on the diagonal. Targets are standardized internally so the
prior mean is 0 on the standardized scale. The posterior is computed via a
Cholesky factorization with a 1e-8 jitter, escalated tenfold up to 1e-2
before giving up.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import DataError, NumericalError

JITTER = 1e-8
JITTER_MAX = 1e-2


def rbf_kernel(a: np.ndarray, b: np.ndarray, lengthscale: float, signal_variance: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return signal_variance * np.exp(-sq / (2.0 * lengthscale ** 2))


class GaussianProcess:
    """Zero-mean exact GP regressor (on the standardized target scale)."""

    def __init__(self, lengthscale=1.0, signal_variance=1.0, noise_variance=1e-4):
        if lengthscale <= 0 or signal_variance <= 0 or noise_variance < 0:
            raise DataError("GP hyperparameters must be positive")
        self.lengthscale = lengthscale
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NumericalError("non-finite training inputs")
        self.X_ = X
        self.y_mean_ = float(y.mean())
        self.y_std_ = float(y.std())
        if self.y_std_ == 0.0:
            self.y_std_ = 1.0
        ys = (y - self.y_mean_) / self.y_std_

        k = rbf_kernel(X, X, self.lengthscale, self.signal_variance)
        k[np.diag_indices_from(k)] += self.noise_variance
        jitter = JITTER
        while True:
            try:
                self.chol_ = cho_factor(k + jitter * np.eye(len(X)), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
                if jitter > JITTER_MAX:
                    raise NumericalError("kernel matrix not positive definite after jitter escalation")
        self.jitter_ = jitter
        self.alpha_ = cho_solve(self.chol_, ys)
        return self

    def predict(self, X):
        """Posterior mean and variance per row, on the original target scale."""
        X = np.asarray(X, dtype=float)
        ks = rbf_kernel(X, self.X_, self.lengthscale, self.signal_variance)
        mu_s = ks @ self.alpha_
        v = cho_solve(self.chol_, ks.T)
        var_s = self.signal_variance + self.noise_variance - np.einsum("ij,ji->i", ks, v)
        var_s = np.clip(var_s, 1e-12, None)
        mu = mu_s * self.y_std_ + self.y_mean_
        var = var_s * self.y_std_ ** 2
        return mu, var

    def params(self) -> dict:
        return {
            "X": self.X_,
            "alpha": self.alpha_,
            "y_mean": self.y_mean_,
            "y_std": self.y_std_,
            "jitter": self.jitter_,
            "lengthscale": self.lengthscale,
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_params(cls, params: dict) -> "GaussianProcess":
        model = cls(
            lengthscale=float(params["lengthscale"]),
            signal_variance=float(params["signal_variance"]),
            noise_variance=float(params["noise_variance"]),
        )
        model.X_ = np.asarray(params["X"], dtype=float)
        model.y_mean_ = float(params["y_mean"])
        model.y_std_ = float(params["y_std"])
        model.jitter_ = float(params["jitter"])
        k = rbf_kernel(model.X_, model.X_, model.lengthscale, model.signal_variance)
        k[np.diag_indices_from(k)] += model.noise_variance + model.jitter_
        model.chol_ = cho_factor(k, lower=True)
        model.alpha_ = np.asarray(params["alpha"], dtype=float)
        return model
