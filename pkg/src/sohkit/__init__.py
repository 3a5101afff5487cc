"""Battery state-of-health estimation from charge-curve segments.

Pipeline: ingest normalized cycle CSVs, extract thresholded CC/CV charge
segments, engineer 30 per-cycle features, select features with
forest-driven recursive elimination, augment training data adversarially,
train one of four uncertainty-aware regressors, recalibrate its predictive
distribution on held-out cells, and score accuracy plus uncertainty quality.
"""

from .data_model import CellHistory, CycleRecord, DatasetManifest, load_cell, load_manifest, partition, ransac_filter, soh
from .features import FEATURE_NAMES, FeatureConfig, assemble_features, featurize_cell
from .pipeline import FeatureMatrix, SelectionResult, fgsm_augment, random_search, rf_rfe_cv, standardize
from .regressors import BayesianRidge, DeepEnsemble, GaussianProcess, JackknifeForest, ModelBundle, predict_bundle
from .segments import CurveSegment, ThresholdConfig, extract_cc_segment, extract_cv_segment, normalize_segment
from .synthetic import SyntheticCellSpec, generate_cell, generate_fleet, write_cell_csv
from .uncertainty import MetricsReport, ReliabilityCurve, fit_recalibration, metrics_report, reliability

__version__ = "0.1.0"
