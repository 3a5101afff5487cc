"""Command-line surface: ingest, featurize, select, train, evaluate, predict, synth.

Configuration is a flat key=value text file; command-line flags override file
values. Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
error. Every command logs a hash of its resolved configuration so runs are
reproducible from (inputs, config, seed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import regressors, uncertainty
from .data_model import load_cell, load_manifest, partition, ransac_filter
from .errors import ConfigError, DataError, NumericalError, SegmentUnavailableError
from .features import FeatureConfig, feature_columns, featurize_cell
from .pipeline import (
    DEFAULT_GAMMA,
    DEFAULT_SEARCH_TRIALS,
    SELECTION_FOREST_SIZE,
    FeatureMatrix,
    fgsm_augment,
    random_search,
    rf_rfe_cv,
    standardize,
)
from .regressors.dnne import DEFAULT_EPOCHS, DEFAULT_MEMBERS, LEARNING_RATE
from .regressors.forest import DEFAULT_TREES
from .segments import ThresholdConfig
from .synthetic import generate_fleet, write_cell_csv
from .uncertainty import DEFAULT_ALPHA, DEFAULT_LEVELS, MetricsReport


@dataclass
class RunConfig:
    """Resolved run configuration; defaults match the pipeline constants."""

    data_dir: str = "."
    manifest: str = "manifest.csv"
    out_dir: str = "out"
    model: str = "rf"
    seed: int = 0
    delta_v: float = 0.3
    i_low_fraction: float = 0.60
    gamma: float = DEFAULT_GAMMA
    selection_forest_size: int = SELECTION_FOREST_SIZE
    model_forest_size: int = DEFAULT_TREES
    ensemble_size: int = DEFAULT_MEMBERS
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = LEARNING_RATE
    search_trials: int = DEFAULT_SEARCH_TRIALS
    alpha: float = DEFAULT_ALPHA
    reliability_levels: int = DEFAULT_LEVELS
    include_cc_capacity: bool = False

    def digest(self) -> str:
        # The output directory does not influence what gets trained, so two
        # runs differing only in destination share a digest.
        payload = {k: v for k, v in asdict(self).items() if k != "out_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


_INT_KEYS = {"seed", "selection_forest_size", "model_forest_size", "ensemble_size",
             "epochs", "search_trials", "reliability_levels"}
_FLOAT_KEYS = {"delta_v", "i_low_fraction", "gamma", "alpha", "learning_rate"}
_BOOL_KEYS = {"include_cc_capacity"}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig()
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        for raw in p.read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: bad config line {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key, val in values.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _INT_KEYS:
                val = int(val)
            elif key in _FLOAT_KEYS:
                val = float(val)
            elif key in _BOOL_KEYS and isinstance(val, str):
                val = val.lower() in ("1", "true", "yes")
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
        setattr(cfg, key, val)
    if cfg.model not in ("brr", "gpr", "rf", "dnne"):
        raise ConfigError(f"unknown model kind {cfg.model!r}")
    return cfg


def _load_cells(cfg: RunConfig) -> dict:
    data_dir = Path(cfg.data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data dir not found: {data_dir}")
    paths = sorted(p for p in data_dir.glob("*.csv") if p.with_suffix(".meta").exists())
    if not paths:
        raise DataError(f"no cell CSV files in {data_dir}")
    return {c.cell_id: c for c in (load_cell(p) for p in paths)}


def _feature_config(cfg: RunConfig, cell, has_cv: bool) -> FeatureConfig:
    thresholds = ThresholdConfig(
        v_high=cell.cut_off_voltage_v,
        i_high=cell.charge_current_a,
        delta_v=cfg.delta_v,
        i_low_fraction=cfg.i_low_fraction,
    )
    return FeatureConfig(thresholds=thresholds, has_cv_phase=has_cv,
                         include_cc_capacity=cfg.include_cc_capacity)


def _has_cv_phase(cell) -> bool:
    return any(c.phase_mask("cv_charge").any() for c in cell.cycles)


def _featurize(cfg: RunConfig, cells, filtered: bool, log) -> FeatureMatrix:
    """Feature matrix over the given cells; the RANSAC filter only on request."""
    has_cv = all(_has_cv_phase(c) for c in cells)
    all_rows, all_groups = [], []
    columns = None
    for cell in cells:
        fcfg = _feature_config(cfg, cell, has_cv)
        mask = None
        ref = None
        if filtered:
            res = ransac_filter(
                np.array([c.cycle_index for c in cell.cycles], dtype=float),
                np.array([c.discharge_capacity_ah for c in cell.cycles]),
                seed=cfg.seed,
            )
            mask = res.inlier_mask
            first = int(np.nonzero(mask)[0][0])
            ref = cell.cycles[first].discharge_capacity_ah
        rows, skipped = featurize_cell(cell, fcfg, inlier_mask=mask, reference_capacity_ah=ref)
        if not rows:
            raise DataError(f"{cell.cell_id}: no usable cycles")
        for cycle_index, reason in skipped:
            log(f"  {cell.cell_id} cycle {cycle_index}: skipped ({reason})")
        columns = feature_columns(fcfg)
        all_rows.extend(rows)
        all_groups.extend([cell.cell_id] * len(rows))
    return FeatureMatrix.from_rows(all_rows, columns, all_groups)


def _predict_matrix(bundle, fm: FeatureMatrix, model=None):
    sub = fm.select_columns(bundle.feature_names)
    return regressors.predict_bundle(bundle, sub.X, model=model)


def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = generate_fleet(args.cells, seed=cfg.seed, protocol=args.protocol,
                           noise=args.noise, n_cycles=args.cycles,
                           capacity_noise_ah=args.capacity_noise)
    n_train, n_cal, n_test = args.train, args.calibration, args.test
    if n_train + n_cal + n_test != len(cells):
        raise ConfigError("train+calibration+test must equal the cell count")
    rows = []
    for i, cell in enumerate(cells):
        write_cell_csv(cell, out)
        if i < n_train:
            role = "feature_selection" if i < args.feature_selection else "train"
        elif i < n_train + n_cal:
            role = "calibration"
        else:
            role = "test"
        rows.append((cell.cell_id, role))
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "role"])
        writer.writerows(rows)
    print(f"wrote {len(cells)} cells + manifest to {out}")
    return 0


def cmd_featurize(cfg: RunConfig, args) -> int:
    cells = _load_cells(cfg)
    manifest = load_manifest(cfg.manifest) if Path(cfg.manifest).exists() else None
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for cid in sorted(cells):
        cell = cells[cid]
        has_cv = _has_cv_phase(cell)
        fcfg = _feature_config(cfg, cell, has_cv)
        rows, skipped = featurize_cell(cell, fcfg)
        if not rows:
            raise DataError(f"{cid}: no usable cycles")
        fm = FeatureMatrix.from_rows(rows, feature_columns(fcfg), [cid] * len(rows))
        fm.to_csv(out / f"{cid}_features.csv")
        role = manifest.assignments.get(cid, "?") if manifest else "?"
        print(f"{cid} ({role}): {len(rows)} cycles featurized, "
              f"{len(skipped)} skipped, {len(fm.columns)} columns")
        for cycle_index, reason in skipped:
            print(f"  cycle {cycle_index}: {reason}")
    return 0


def cmd_select(cfg: RunConfig, args) -> int:
    cells = _load_cells(cfg)
    manifest = load_manifest(cfg.manifest)
    part = partition(list(cells.values()), manifest)
    fs_cells = part.feature_selection or part.train
    fm = _featurize(cfg, fs_cells, filtered=True, log=print)
    result = rf_rfe_cv(fm, forest_size=cfg.selection_forest_size, seed=cfg.seed)
    print(f"selected {len(result.selected)} of {len(fm.columns)} features:")
    for name in result.selected:
        print(f"  {name}")
    for size, score in zip(result.candidate_sizes, result.cv_scores):
        print(f"  size {size:2d}: mean CV score {score:.4f}")
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "selected_features.txt"
    path.write_text("\n".join(result.selected) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    t_start = time.perf_counter()
    stage = "load"
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def timed(name):
        nonlocal stage, t_start
        now = time.perf_counter()
        print(f"[{name}] {now - t_start:.2f}s")
        t_start = now
        stage = name

    try:
        cells = _load_cells(cfg)
        manifest = load_manifest(cfg.manifest)
        part = partition(list(cells.values()), manifest)
        if not part.calibration:
            raise ConfigError("manifest has no calibration cells; recalibration impossible")
        timed("load")

        stage = "featurize"
        train_fm = _featurize(cfg, part.train, filtered=True, log=print)
        cal_fm = _featurize(cfg, part.calibration, filtered=False, log=print)
        timed("featurize+ransac")

        stage = "feature selection"
        if getattr(args, "features", None):
            names = [ln.strip() for ln in Path(args.features).read_text(encoding="utf-8").splitlines()
                     if ln.strip()]
            unknown = [n for n in names if n not in train_fm.columns]
            if unknown:
                raise ConfigError(f"unknown feature names in {args.features}: {unknown}")
            if not names:
                raise ConfigError(f"{args.features}: no feature names")
            selected = names
            sel_scores, sel_sizes = [], []
        elif part.feature_selection and len(part.feature_selection) >= 2:
            fs_ids = {c.cell_id for c in part.feature_selection}
            fs_mask = np.isin(train_fm.groups, sorted(fs_ids))
            fs_fm = FeatureMatrix(X=train_fm.X[fs_mask], y=train_fm.y[fs_mask],
                                  columns=train_fm.columns, groups=train_fm.groups[fs_mask])
            selection = rf_rfe_cv(fs_fm, forest_size=cfg.selection_forest_size, seed=cfg.seed)
            selected = selection.selected
            sel_scores = selection.cv_scores
            sel_sizes = selection.candidate_sizes
        else:
            print("fewer than 2 feature-selection cells; keeping all features")
            selected = list(train_fm.columns)
            sel_scores, sel_sizes = [], []
        train_sel = train_fm.select_columns(selected)
        timed("selection")

        stage = "augmentation"
        aug = fgsm_augment(train_sel, gamma=cfg.gamma, seed=cfg.seed + 1)
        timed("fgsm")

        stage = "standardize"
        Xs, stats = standardize(aug.X, columns=selected)
        timed("standardize")

        stage = "hyperparameter search"
        search_fm = FeatureMatrix(X=Xs, y=aug.y, columns=selected, groups=aug.groups) \
            if cfg.model in regressors.STANDARDIZED_KINDS else aug
        hyper = random_search(cfg.model, search_fm, trials=cfg.search_trials, seed=cfg.seed + 2)
        timed("search")

        stage = "fit"
        if cfg.model == "rf":
            hyper = dict(hyper, n_trees=cfg.model_forest_size)
            model = regressors.fit_model("rf", aug.X, aug.y, hyper, seed=cfg.seed + 3)
        elif cfg.model == "dnne":
            hyper = dict(hyper, n_members=cfg.ensemble_size, epochs=cfg.epochs,
                         lr=cfg.learning_rate)
            model = regressors.fit_model("dnne", Xs, aug.y, hyper, seed=cfg.seed + 3,
                                         groups=aug.groups)
        else:
            model = regressors.fit_model(cfg.model, Xs, aug.y, hyper, seed=cfg.seed + 3)
        timed("fit")

        stage = "recalibration"
        bundle = regressors.build_bundle(
            cfg.model, model, hyper, stats.as_dict(), selected, seed=cfg.seed + 3,
            meta={
                "config_hash": cfg.digest(),
                "delta_v": cfg.delta_v,
                "i_low_fraction": cfg.i_low_fraction,
                "alpha": cfg.alpha,
                "reliability_levels": cfg.reliability_levels,
                "has_cv_phase": "cvct_s" in train_fm.columns,
                "include_cc_capacity": cfg.include_cc_capacity,
                "selection_sizes": sel_sizes,
                "selection_scores": sel_scores,
            },
        )
        mu, sigma = _predict_matrix(bundle, cal_fm, model=model)
        curve = uncertainty.reliability(mu, sigma, cal_fm.y, m=cfg.reliability_levels)
        rmap = uncertainty.fit_recalibration(curve)
        bundle.recalibration = {"knots_x": rmap.knots_x, "knots_y": rmap.knots_y}
        timed("recalibrate")

        bundle_path = out / f"model_{cfg.model}.json"
        bundle.save(bundle_path)
        print(f"config {cfg.digest()} -> {bundle_path}")
        return 0
    except (ConfigError, DataError, NumericalError):
        print(f"training failed during stage: {stage}", file=sys.stderr)
        raise


def _write_metrics(path: Path, reports: dict[str, MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", *MetricsReport.FIELDS])
        for cid, rep in reports.items():
            writer.writerow([cid, *[repr(v) if isinstance(v, float) else v
                                    for v in (getattr(rep, f) for f in MetricsReport.FIELDS)]])


def cmd_evaluate(cfg: RunConfig, args) -> int:
    bundle = regressors.ModelBundle.load(args.bundle)
    cells = _load_cells(cfg)
    manifest = load_manifest(cfg.manifest)
    part = partition(list(cells.values()), manifest)
    if not part.test:
        raise ConfigError("manifest has no test cells")
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = regressors.model_from_bundle(bundle)
    alpha = float(bundle.meta.get("alpha", cfg.alpha))

    reports: dict[str, MetricsReport] = {}
    pred_rows = []
    z = uncertainty.Z90
    for cell in part.test:
        fm = _featurize(cfg, [cell], filtered=False, log=print)
        mu, sigma = _predict_matrix(bundle, fm, model=model)
        reports[cell.cell_id] = uncertainty.metrics_report(mu, sigma, fm.y, alpha=alpha)
        for k, yt, m, s in zip(fm.cycle_index, fm.y, mu, sigma):
            pred_rows.append([cell.cell_id, int(k), repr(float(yt)), repr(float(m)),
                              repr(float(s)), repr(float(m - z * s)), repr(float(m + z * s))])

    avg = MetricsReport(
        **{f: float(np.mean([getattr(r, f) for r in reports.values()]))
           for f in MetricsReport.FIELDS if f != "n"},
        n=int(sum(r.n for r in reports.values())),
    )
    reports["__average__"] = avg

    _write_metrics(out / f"metrics_{bundle.kind}.csv", reports)
    (out / f"metrics_{bundle.kind}.json").write_text(
        json.dumps({cid: rep.as_dict() for cid, rep in reports.items()}, indent=1),
        encoding="utf-8")
    with open(out / f"predictions_{bundle.kind}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "cycle_index", "y_true", "mu", "sigma", "lo90", "hi90"])
        writer.writerows(pred_rows)
    print(f"config {cfg.digest()}")
    for cid, rep in reports.items():
        print(f"{cid}: MAPE {rep.mape:.3f}%  RMSPE {rep.rmspe:.3f}%  "
              f"C {rep.c_score:.1f}  Sh {rep.sharpness:.4f}  "
              f"acc {rep.alpha_accuracy:.1f}%  beta {rep.beta:.3f}  PEP {rep.pep:.1f}%")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    bundle = regressors.ModelBundle.load(args.bundle)
    cell = load_cell(args.input)
    has_cv = bool(bundle.meta.get("has_cv_phase", _has_cv_phase(cell)))
    if has_cv and not _has_cv_phase(cell):
        raise SegmentUnavailableError("i_high", "bundle expects a CV phase the input lacks")
    fcfg = _feature_config(cfg, cell, has_cv)
    rows, skipped = featurize_cell(cell, fcfg)
    if not rows:
        reasons = "; ".join(r for _, r in skipped) or "no cycles"
        raise DataError(f"no predictable cycle in {args.input}: {reasons}")
    last = rows[-1]
    fm = FeatureMatrix.from_rows([last], feature_columns(fcfg), [cell.cell_id])
    mu, sigma = _predict_matrix(bundle, fm)
    z = uncertainty.Z90
    print(f"cycle {int(last['cycle_index'])}: "
          f"SOH {mu[0]:.4f}  sigma {sigma[0]:.4f}  "
          f"90% interval [{mu[0] - z * sigma[0]:.4f}, {mu[0] + z * sigma[0]:.4f}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sohkit",
                                     description="Battery SOH estimation pipeline")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--model", choices=["brr", "gpr", "rf", "dnne"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--data-dir")
    parser.add_argument("--manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--cells", type=int, default=12)
    synth.add_argument("--cycles", type=int, default=100)
    synth.add_argument("--protocol", choices=["cc_cv", "cc", "fast_cc_cv"], default="cc_cv")
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--capacity-noise", type=float, default=None,
                       help="capacity noise in Ah, overriding the --noise scaling")
    synth.add_argument("--train", type=int, default=7)
    synth.add_argument("--feature-selection", type=int, default=3,
                       help="leading train cells also used for feature selection")
    synth.add_argument("--calibration", type=int, default=2)
    synth.add_argument("--test", type=int, default=3)

    sub.add_parser("featurize", help="write per-cell feature CSVs")
    sub.add_parser("select", help="run feature selection and report")
    train = sub.add_parser("train", help="train a model bundle")
    train.add_argument("--features", default=None,
                       help="file with precomputed feature names (one per line); skips selection")

    ev = sub.add_parser("evaluate", help="evaluate a bundle on the test cells")
    ev.add_argument("--bundle", required=True)

    pr = sub.add_parser("predict", help="predict SOH for one cycle file")
    pr.add_argument("--bundle", required=True)
    pr.add_argument("--input", required=True, help="cycle CSV (schema as ingest)")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "select": cmd_select,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, {
            "model": args.model,
            "seed": args.seed,
            "out_dir": args.out,
            "data_dir": args.data_dir,
            "manifest": args.manifest,
        })
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
