"""Feature selection, adversarial augmentation, scaling and hyperparameter search.

Cross-validation is always grouped by cell (leave-one-cell-out), matching
how the models are deployed: no cell contributes rows to both sides of a
fold. All randomness is reproducible from (inputs, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .errors import ConfigError, DataError
from .regressors import fit_model
from .uncertainty import rmspe

SELECTION_FOREST_SIZE = 700
DEFAULT_GAMMA = 0.01
FGSM_RIDGE_ALPHA = 1.0
DEFAULT_SEARCH_TRIALS = 50

# Natural-log random-search spaces for the Bayesian models; the forest and
# the deep ensemble use a fixed architecture with randomized initialization.
BRR_SPACE = {"alpha_shape": (1e-6, 1e-2), "alpha_rate": (1e-6, 1e-2),
             "lambda_shape": (1e-6, 1e-2), "lambda_rate": (1e-6, 1e-2)}
GPR_LOG_SPACE = {"lengthscale": (-2.0, 2.0), "signal_variance": (-3.0, 1.0),
                 "noise_variance": (-6.0, -1.0)}


@dataclass
class FeatureMatrix:
    """Numeric design matrix with per-row cell labels and a target vector."""

    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    groups: np.ndarray  # cell_id per row
    cycle_index: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.groups = np.asarray(self.groups)
        if self.X.shape != (len(self.y), len(self.columns)):
            raise DataError("feature matrix shape mismatch")
        if len(self.groups) != len(self.y):
            raise DataError("group labels must cover every row")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DataError("feature matrix contains non-finite entries")

    @property
    def n_cells(self) -> int:
        return len(set(self.groups.tolist()))

    def select_columns(self, names: list[str]) -> "FeatureMatrix":
        idx = [self.columns.index(n) for n in names]
        return replace(self, X=self.X[:, idx], columns=list(names))

    @classmethod
    def from_rows(cls, rows: list[dict], columns: list[str], groups: list[str]) -> "FeatureMatrix":
        X = np.array([[row[c] for c in columns] for row in rows], dtype=float)
        y = np.array([row["soh"] for row in rows], dtype=float)
        cyc = np.array([row.get("cycle_index", -1) for row in rows], dtype=int)
        return cls(X=X, y=y, columns=list(columns), groups=np.asarray(groups), cycle_index=cyc)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_id", "cycle_index", *self.columns, "soh"])
            cyc = self.cycle_index if self.cycle_index is not None else np.full(len(self.y), -1)
            for g, k, row, t in zip(self.groups, cyc, self.X, self.y):
                writer.writerow([g, int(k), *[repr(float(v)) for v in row], repr(float(t))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["cell_id", "cycle_index"] or header[-1] != "soh":
                raise DataError(f"{path}: not a feature matrix CSV")
            columns = header[2:-1]
            groups, cyc, X, y = [], [], [], []
            for row in reader:
                groups.append(row[0])
                cyc.append(int(row[1]))
                X.append([float(v) for v in row[2:-1]])
                y.append(float(row[-1]))
        return cls(X=np.asarray(X), y=np.asarray(y), columns=columns,
                   groups=np.asarray(groups), cycle_index=np.asarray(cyc))


@dataclass
class SelectionResult:
    """Outcome of recursive feature elimination."""

    selected: list[str]
    candidate_sizes: list[int]
    cv_scores: list[float]  # mean grouped-CV score (negative RMSPE) per size


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    columns: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "columns": list(self.columns)}


def _grouped_folds(groups: np.ndarray):
    """Leave-one-cell-out folds: (train_idx, valid_idx) per cell."""
    cells = sorted(set(groups.tolist()))
    if len(cells) < 2:
        raise DataError("grouped cross-validation needs at least 2 cells")
    for cell in cells:
        valid = groups == cell
        yield np.nonzero(~valid)[0], np.nonzero(valid)[0]


def _selection_forest(forest_size: int, n_features: int, seed: int) -> RandomForestRegressor:
    """Regression forest with the usual d/3 features tried per split."""
    return RandomForestRegressor(
        n_estimators=forest_size,
        max_features=max(1, math.ceil(n_features / 3)),
        random_state=seed,
        n_jobs=-1,
    )


def _forest_cv_score(fm: FeatureMatrix, cols_idx: np.ndarray, forest_size: int, seed: int) -> float:
    """Mean negative RMSPE over leave-one-cell-out folds."""
    scores = []
    for tr, va in _grouped_folds(fm.groups):
        rf = _selection_forest(forest_size, len(cols_idx), seed)
        rf.fit(fm.X[np.ix_(tr, cols_idx)], fm.y[tr])
        pred = rf.predict(fm.X[np.ix_(va, cols_idx)])
        scores.append(-rmspe(pred, fm.y[va]))
    return float(np.mean(scores))


def rf_rfe_cv(fm: FeatureMatrix, forest_size: int = SELECTION_FOREST_SIZE,
              seed: int = 0) -> SelectionResult:
    """Recursive feature elimination driven by random-forest importance.

    At each step the remaining subset is scored by leave-one-cell-out CV,
    then the feature with the smallest mean impurity decrease is dropped
    (ties broken by column-name order). The returned subset is the size with
    the best mean CV score, ties broken toward fewer features. Run this on
    the feature-selection cell subset only.
    """
    remaining = list(range(len(fm.columns)))
    sizes, scores, subsets = [], [], []
    step_seed = seed
    while remaining:
        cols_idx = np.asarray(remaining)
        subsets.append([fm.columns[i] for i in remaining])
        sizes.append(len(remaining))
        scores.append(_forest_cv_score(fm, cols_idx, forest_size, step_seed))
        if len(remaining) == 1:
            break
        rf = _selection_forest(forest_size, len(remaining), step_seed)
        rf.fit(fm.X[:, cols_idx], fm.y)
        importances = rf.feature_importances_
        # Least important out; ties resolved by column name.
        order = sorted(range(len(remaining)),
                       key=lambda j: (importances[j], fm.columns[remaining[j]]))
        remaining.pop(order[0])

    best = max(range(len(scores)), key=lambda i: (scores[i], -sizes[i]))
    return SelectionResult(selected=sorted(subsets[best]),
                           candidate_sizes=sizes, cv_scores=scores)


def standardize(X: np.ndarray, stats: StandardizationStats | None = None,
                columns: list[str] | None = None):
    """Per-column z-score; training statistics are reused on later data.

    Constant columns get their deviation clamped to 1 so they map to 0.
    """
    X = np.asarray(X, dtype=float)
    if stats is None:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        stats = StandardizationStats(mean=mean, std=std, columns=columns or [])
    return (X - stats.mean) / stats.std, stats


def fgsm_augment(fm: FeatureMatrix, gamma: float = DEFAULT_GAMMA, seed: int = 0) -> FeatureMatrix:
    """Adversarial augmentation via the fast gradient sign method.

    A ridge model (strength 1.0 on standardized features) supplies the
    squared-error loss gradient; each row is displaced by exactly
    gamma * range_j * sign(dl/dx_j) per feature. Zero-range features are
    left untouched. Output = original rows followed by adversarial rows
    with unchanged targets.
    """
    Xs, stats = standardize(fm.X, columns=fm.columns)
    n, p = Xs.shape
    yc = fm.y - fm.y.mean()
    # Ridge weights on standardized, target-centered data.
    w = np.linalg.solve(Xs.T @ Xs + FGSM_RIDGE_ALPHA * np.eye(p), Xs.T @ yc)
    resid = Xs @ w - yc
    grad = 2.0 * resid[:, None] * w[None, :]  # d/dx of (x.w - y)^2, per row
    ranges = fm.X.max(axis=0) - fm.X.min(axis=0)
    X_adv = fm.X + gamma * ranges[None, :] * np.sign(grad)
    cyc = fm.cycle_index
    return FeatureMatrix(
        X=np.vstack([fm.X, X_adv]),
        y=np.concatenate([fm.y, fm.y]),
        columns=list(fm.columns),
        groups=np.concatenate([fm.groups, fm.groups]),
        cycle_index=None if cyc is None else np.concatenate([cyc, cyc]),
    )


def _sample_hyperparams(kind: str, rng: np.random.Generator) -> dict:
    if kind == "brr":
        return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in BRR_SPACE.items()}
    if kind == "gpr":
        return {k: float(math.exp(rng.uniform(lo, hi))) for k, (lo, hi) in GPR_LOG_SPACE.items()}
    if kind in ("rf", "dnne"):
        return {}
    raise ConfigError(f"unknown model kind {kind!r}")


def random_search(kind: str, fm: FeatureMatrix, trials: int = DEFAULT_SEARCH_TRIALS,
                  seed: int = 0) -> dict:
    """Uniform random hyperparameter search scored by per-cell batch CV.

    Each trial's sample is drawn from a stream derived from (seed, trial);
    trials are ranked by mean leave-one-cell-out RMSPE. The forest and the
    deep ensemble have no searched hyperparameters and return defaults
    immediately.
    """
    if trials < 1:
        raise ConfigError("need at least one search trial")
    if kind in ("rf", "dnne"):
        return {}

    root = np.random.SeedSequence(seed)
    folds = list(_grouped_folds(fm.groups))
    best_hp, best_score = None, math.inf
    for ss in root.spawn(trials):
        hp = _sample_hyperparams(kind, np.random.default_rng(ss))
        fold_scores = []
        try:
            for tr, va in folds:
                model = fit_model(kind, fm.X[tr], fm.y[tr], hp, seed=seed)
                mu, _ = model.predict(fm.X[va])
                fold_scores.append(rmspe(mu, fm.y[va]))
            score = float(np.mean(fold_scores))
        except Exception:
            continue  # numerically failed trial; skip
        if score < best_score:
            best_score = score
            best_hp = hp
    if best_hp is None:
        raise ConfigError(f"no {kind} search trial succeeded")
    return best_hp
