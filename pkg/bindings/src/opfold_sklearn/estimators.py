"""scikit-learn style estimators over the opfold engine.

Thin wrappers only: every number is produced by the engine, and fitted
models expose the engine's coefficients, operator log and selection table
for inspection.  Arrays cross the boundary as row-major contiguous float64
buffers; inputs that already satisfy the contract are handed over without a
copy.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

import opfold
from opfold.aom_pls import AomPlsConfig, fit_aom_pls, fit_aom_plsda, select_global
from opfold.aom_ridge import AomRidgeConfig, default_alpha_grid, fit_aom_ridge, screen_ridge
from opfold.fastaom import FastAomConfig, fit_fastaom
from opfold.operators import bank_from_specs, compact_bank, parse_spec
from opfold.pls_engine import center

_METHODS = ("aom-pls", "aom-ridge", "fastaom")


def as_engine_matrix(X) -> np.ndarray:
    """Row-major contiguous float64 view of X; no copy when X already is."""
    return np.ascontiguousarray(X, dtype=np.float64)


def _build_bank(bank, p):
    if isinstance(bank, opfold.OperatorBank):
        return bank
    if bank in (None, "compact"):
        return compact_bank(p)
    specs = [parse_spec(s.strip()) for s in str(bank).split(";") if s.strip()]
    return bank_from_specs(specs, p)


class OperatorFoldRegressor(BaseEstimator, RegressorMixin):
    """Operator-adaptive calibration with a fit/predict interface.

    Parameters mirror the engine configs; ``method`` selects the engine:
    'aom-pls' (cross-covariance screening), 'aom-ridge' (operator-induced
    kernels) or 'fastaom' (operator-chain screening).
    """

    def __init__(self, method="aom-pls", bank="compact", k_max=15, folds=5,
                 seed=0, criterion="cv_rmse", alpha_grid=None, depth=2,
                 top_m=8, svd_rank=None, threads=1):
        self.method = method
        self.bank = bank
        self.k_max = k_max
        self.folds = folds
        self.seed = seed
        self.criterion = criterion
        self.alpha_grid = alpha_grid
        self.depth = depth
        self.top_m = top_m
        self.svd_rank = svd_rank
        self.threads = threads

    def _engine_config(self, p):
        bank = _build_bank(self.bank, p)
        if self.method == "aom-pls":
            return AomPlsConfig(bank=bank, k_max=self.k_max, folds=self.folds,
                                seed=self.seed, criterion=self.criterion,
                                threads=self.threads)
        if self.method == "aom-ridge":
            grid = default_alpha_grid() if self.alpha_grid is None else np.asarray(self.alpha_grid)
            return AomRidgeConfig(bank=bank, alpha_grid=grid, folds=self.folds,
                                  seed=self.seed, threads=self.threads)
        if self.method == "fastaom":
            return FastAomConfig(bank=bank, depth=self.depth, top_m=self.top_m,
                                 svd_rank=self.svd_rank, folds=self.folds,
                                 seed=self.seed, k_max=self.k_max)
        raise opfold.ConfigError(f"method must be one of {_METHODS}, got {self.method!r}")

    def fit(self, X, y):
        X = as_engine_matrix(X)
        y = np.ascontiguousarray(y, dtype=np.float64)
        cfg = self._engine_config(X.shape[1])
        if self.method == "aom-pls":
            self._fit = fit_aom_pls(X, y, cfg)
            self.coef_ = self._fit.B
        elif self.method == "aom-ridge":
            self._fit = fit_aom_ridge(X, y, cfg)
            self.coef_ = self._fit.beta
        else:
            self._fit = fit_fastaom(X, y, cfg)
            self.coef_ = self._fit.beta
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_engine_matrix(X)
        fit = self._fit
        beta = getattr(fit, "B", None)
        if beta is None:
            beta = fit.beta
        out = (X - fit.x_mean) @ beta + fit.y_mean
        return out.ravel() if out.shape[1] == 1 else out

    def screen(self, X, y):
        """Selection table for (X, y) without keeping a fitted model."""
        X = as_engine_matrix(X)
        y = np.ascontiguousarray(y, dtype=np.float64)
        cfg = self._engine_config(X.shape[1])
        if self.method == "aom-ridge":
            return screen_ridge(X, y, cfg)
        if self.method == "aom-pls":
            return select_global(center(X, y), cfg)
        raise opfold.ConfigError("screen supports aom-pls and aom-ridge")

    @property
    def coefficients(self):
        return self.coef_

    @property
    def operator_log(self) -> dict:
        fit = self._fit
        if self.method == "fastaom":
            return {
                "survivors": [
                    {"chain": c.label, "score": float(c.score), "weight": float(w)}
                    for c, w in zip(fit.survivors, fit.weights)
                ],
                "ridge_alpha": float(fit.ridge_alpha),
                "components": int(fit.pls_stage.n_components),
            }
        table = fit.selection
        log = {
            "selected_operator": table.names[table.chosen[0]],
            "selected_index": int(table.chosen[0]),
        }
        if self.method == "aom-pls":
            log["components"] = int(table.chosen[1])
        else:
            log["alpha"] = float(fit.alpha)
        return log

    @property
    def selection_table(self):
        if self.method == "fastaom":
            return self._fit.survivors
        return self._fit.selection


class OperatorFoldClassifier(BaseEstimator, ClassifierMixin):
    """Operator-adaptive PLS-DA with a fit/predict interface."""

    def __init__(self, bank="compact", k_max=15, folds=5, seed=0, threads=1):
        self.bank = bank
        self.k_max = k_max
        self.folds = folds
        self.seed = seed
        self.threads = threads

    def fit(self, X, y):
        X = as_engine_matrix(X)
        y = np.asarray(y)
        cfg = AomPlsConfig(bank=_build_bank(self.bank, X.shape[1]),
                           k_max=self.k_max, folds=self.folds,
                           seed=self.seed, threads=self.threads)
        self._fit = fit_aom_plsda(X, y, cfg)
        self.classes_ = self._fit.classes
        self.coef_ = self._fit.pls.B
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_engine_matrix(X)
        return opfold.predict_labels(self._fit, X)

    def decision_function(self, X):
        X = as_engine_matrix(X)
        return opfold.predict(self._fit.pls, X)

    @property
    def coefficients(self):
        return self.coef_

    @property
    def operator_log(self) -> dict:
        table = self._fit.selection
        return {
            "selected_operator": table.names[table.chosen[0]],
            "selected_index": int(table.chosen[0]),
            "components": int(table.chosen[1]),
        }

    @property
    def selection_table(self):
        return self._fit.selection
