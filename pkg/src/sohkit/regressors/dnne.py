"""Deep ensemble of mean/variance networks trained on Gaussian NLL.

Each member is a 2-hidden-layer feed-forward network. With d input
features the hidden sizes are ceil(d/2) and ceil(ceil(d/2)/2); when
d < 10 they are forced to (4, 3). Activations: ReLU then LeakyReLU
(slope 0.01); the mean head passes through a sigmoid (targets live in
(0, 1]), the variance head through softplus plus a 1e-6 floor. Members
share the data and differ only in initialization. Training uses Adam
(lr 0.001, beta1 0.9, beta2 0.999, eps 1e-8), 200 epochs, with one batch
per cell.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError, NumericalError

LEAKY_SLOPE = 0.01
VAR_FLOOR = 1e-6
DEFAULT_MEMBERS = 5
DEFAULT_EPOCHS = 200
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_KEYS = ("W1", "b1", "W2", "b2", "Wm", "bm", "Wv", "bv")


def hidden_sizes(n_features: int) -> tuple[int, int]:
    """Layer-width rule: halve twice, but force (4, 3) below 10 inputs."""
    if n_features < 10:
        return 4, 3
    h1 = math.ceil(n_features / 2)
    h2 = h1 // 2
    return h1, h2


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    return np.logaddexp(0.0, z)


def init_params(n_features: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights; variance-head bias starts sigma^2 near 0.01."""
    h1, h2 = hidden_sizes(n_features)
    def glorot(fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))
    return {
        "W1": glorot(n_features, h1), "b1": np.zeros(h1),
        "W2": glorot(h1, h2), "b2": np.zeros(h2),
        "Wm": glorot(h2, 1), "bm": np.zeros(1),
        "Wv": glorot(h2, 1), "bv": np.full(1, -4.6),
    }


def forward(params: dict, X: np.ndarray):
    """Predictive mean and variance plus the cached activations."""
    z1 = X @ params["W1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params["W2"] + params["b2"]
    a2 = np.where(z2 > 0, z2, LEAKY_SLOPE * z2)
    zm = (a2 @ params["Wm"] + params["bm"]).ravel()
    zv = (a2 @ params["Wv"] + params["bv"]).ravel()
    mu = _sigmoid(zm)
    var = _softplus(zv) + VAR_FLOOR
    cache = (X, z1, a1, z2, a2, zm, zv, mu, var)
    return mu, var, cache


def nll_and_grad(params: dict, X: np.ndarray, y: np.ndarray):
    """Gaussian negative log-likelihood and its analytic parameter gradient."""
    n = len(y)
    mu, var, cache = forward(params, X)
    X, z1, a1, z2, a2, zm, zv, _, _ = cache
    resid = y - mu
    nll = float(np.mean(0.5 * np.log(var) + resid ** 2 / (2.0 * var)))

    dmu = (-resid / var) / n
    dvar = (0.5 / var - resid ** 2 / (2.0 * var ** 2)) / n
    dzm = (dmu * mu * (1.0 - mu))[:, None]
    dzv = (dvar * _sigmoid(zv))[:, None]  # softplus' = sigmoid

    grads = {
        "Wm": a2.T @ dzm, "bm": dzm.sum(axis=0),
        "Wv": a2.T @ dzv, "bv": dzv.sum(axis=0),
    }
    da2 = dzm @ params["Wm"].T + dzv @ params["Wv"].T
    dz2 = da2 * np.where(z2 > 0, 1.0, LEAKY_SLOPE)
    grads["W2"] = a1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ params["W2"].T
    dz1 = da1 * (z1 > 0)
    grads["W1"] = X.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return nll, grads


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in PARAM_KEYS])


def unflatten_params(theta: np.ndarray, template: dict) -> dict:
    out = {}
    pos = 0
    for k in PARAM_KEYS:
        size = template[k].size
        out[k] = theta[pos:pos + size].reshape(template[k].shape)
        pos += size
    return out


class _Adam:
    def __init__(self, params: dict, lr=LEARNING_RATE):
        self.lr = lr
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = ADAM_BETA1 * self.m[k] + (1 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1 - ADAM_BETA2) * g * g
            mhat = self.m[k] / (1 - ADAM_BETA1 ** self.t)
            vhat = self.v[k] / (1 - ADAM_BETA2 ** self.t)
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        return params


class DeepEnsemble:
    """Ensemble of independently initialized mean/variance networks."""

    def __init__(self, n_members: int = DEFAULT_MEMBERS, epochs: int = DEFAULT_EPOCHS,
                 lr: float = LEARNING_RATE, seed: int = 0):
        self.n_members = n_members
        self.epochs = epochs
        self.lr = lr
        self.seed = seed

    def fit(self, X, y, groups=None):
        """Train all members; batches are the per-cell groups when given."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NumericalError("non-finite training inputs")
        if np.any(y > 1.0):
            # Sigmoid head cannot exceed 1; early-life SOH above 1 is clipped.
            self.n_clipped_ = int((y > 1.0).sum())
            y = np.minimum(y, 1.0)
        else:
            self.n_clipped_ = 0

        if groups is None:
            batches = [np.arange(len(y))]
        else:
            groups = np.asarray(groups)
            batches = [np.nonzero(groups == g)[0] for g in sorted(set(groups.tolist()))]

        root = np.random.SeedSequence(self.seed)
        self.members_ = []
        for m, ss in enumerate(root.spawn(self.n_members)):
            rng = np.random.default_rng(ss)
            params = init_params(X.shape[1], rng)
            opt = _Adam(params, lr=self.lr)
            for _ in range(self.epochs):
                order = rng.permutation(len(batches))
                for bi in order:
                    idx = batches[bi]
                    nll, grads = nll_and_grad(params, X[idx], y[idx])
                    if not math.isfinite(nll):
                        raise NumericalError(f"member {m}: training loss diverged")
                    params = opt.step(params, grads)
            self.members_.append(params)
        return self

    def predict(self, X):
        """Mixture mean and variance across members."""
        X = np.asarray(X, dtype=float)
        mus, vars_ = [], []
        for params in self.members_:
            mu, var, _ = forward(params, X)
            mus.append(mu)
            vars_.append(var)
        mus = np.asarray(mus)
        vars_ = np.asarray(vars_)
        mu_star = mus.mean(axis=0)
        var_star = (vars_ + mus ** 2).mean(axis=0) - mu_star ** 2
        return mu_star, np.clip(var_star, VAR_FLOOR, None)

    def params(self) -> dict:
        return {"members": [dict(p) for p in self.members_], "n_clipped": self.n_clipped_}

    @classmethod
    def from_params(cls, params: dict, seed: int = 0) -> "DeepEnsemble":
        model = cls(n_members=len(params["members"]), seed=seed)
        model.members_ = [
            {k: np.asarray(v, dtype=float) for k, v in member.items()}
            for member in params["members"]
        ]
        model.n_clipped_ = int(params.get("n_clipped", 0))
        return model
