"""scikit-learn style estimators over the opfold calibration engine."""

from .estimators import OperatorFoldClassifier, OperatorFoldRegressor, as_engine_matrix

__all__ = ["OperatorFoldClassifier", "OperatorFoldRegressor", "as_engine_matrix"]
__version__ = "0.1.0"
