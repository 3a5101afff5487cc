"""Library-level walkthrough, no CLI: one cell from raw cycles to a
calibrated SOH prediction with uncertainty.

Shows the individual stages the `train` command chains together:
segment extraction -> feature engineering -> augmentation -> regression
-> reliability-based recalibration.
"""

import numpy as np

from sohkit.features import FeatureConfig, feature_columns, featurize_cell
from sohkit.pipeline import FeatureMatrix, fgsm_augment, random_search, standardize
from sohkit.regressors.gpr import GaussianProcess
from sohkit.segments import ThresholdConfig, extract_cc_segment
from sohkit.synthetic import generate_fleet
from sohkit.uncertainty import (
    apply_recalibration,
    c_score,
    fit_recalibration,
    reliability,
    rmspe,
)


def featurize(cells, cfg):
    rows, groups = [], []
    for cell in cells:
        cell_rows, skipped = featurize_cell(cell, cfg)
        rows.extend(cell_rows)
        groups.extend([cell.cell_id] * len(cell_rows))
        if skipped:
            print(f"  {cell.cell_id}: {len(skipped)} cycles skipped")
    return FeatureMatrix.from_rows(rows, feature_columns(cfg), groups)


def main():
    cells = generate_fleet(6, seed=4, noise=1.0, n_cycles=60)
    train, cal, test = cells[:4], cells[4:5], cells[5:]

    # Segment extraction: the late-CC voltage window of one cycle.
    thresholds = ThresholdConfig(v_high=cells[0].cut_off_voltage_v,
                                 i_high=cells[0].charge_current_a)
    seg = extract_cc_segment(cells[0].cycles[10], thresholds)
    print(f"CC segment of cycle 10: {len(seg.t)} samples, "
          f"duration {seg.t[-1]:.0f} s")

    # Feature engineering for each split.
    cfg = FeatureConfig(thresholds=thresholds)
    fm_train = featurize(train, cfg)
    fm_cal = featurize(cal, cfg)
    fm_test = featurize(test, cfg)
    print(f"features: {fm_train.X.shape[1]} columns, "
          f"{fm_train.X.shape[0]} training cycles")

    # Adversarial augmentation doubles the training rows.
    aug = fgsm_augment(fm_train, seed=1)

    # A Gaussian-process regressor on standardized features, with kernel
    # hyperparameters picked by leave-one-cell-out random search.
    Xs, stats = standardize(aug.X, columns=aug.columns)
    search_fm = FeatureMatrix(X=Xs, y=aug.y, columns=aug.columns,
                              groups=aug.groups)
    hyper = random_search("gpr", search_fm, trials=8, seed=2)
    print(f"searched kernel: {', '.join(f'{k}={v:.3g}' for k, v in hyper.items())}")
    gp = GaussianProcess(**hyper).fit(Xs, aug.y)

    def predict(fm):
        X = (fm.X - stats.mean) / stats.std
        mu, var = gp.predict(X)
        return mu, np.sqrt(var)

    # Recalibrate the predictive sigma on the held-out calibration cell.
    mu_c, s_c = predict(fm_cal)
    rmap = fit_recalibration(reliability(mu_c, s_c, fm_cal.y))

    mu, sigma_raw = predict(fm_test)
    _, sigma = apply_recalibration(rmap, mu, sigma_raw)
    print(f"test RMSPE             : {rmspe(mu, fm_test.y):.2f} %")
    print(f"90% coverage, raw sigma: {c_score(mu, sigma_raw, fm_test.y):.1f} %")
    print(f"90% coverage, rescaled : {c_score(mu, sigma, fm_test.y):.1f} %")


if __name__ == "__main__":
    main()
