"""Global (operator, component-count) selection on the cross-covariance.

The screening step never touches the sample dimension: every candidate
operator acts on the single p x q summary S by left multiplication, and one
extraction per (operator, fold) scores every component count, so the whole
bank costs bank-size x folds inner fits instead of one fit per grid cell.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import counters
from .errors import ConfigError, DataError
from .operators import OperatorBank
from .pls_engine import (
    CenteredData,
    CrossCov,
    PlsFit,
    center,
    cross_covariance,
    predict,
    predict_prefix,
    prefix_response_maps,
    simpls_extract,
    _find_nonfinite,
)
from .selection_stats import balanced_accuracy, kfold_plan

_CRITERIA = ("cv_rmse", "press", "covariance")


@dataclass
class AomPlsConfig:
    bank: OperatorBank
    k_max: int = 15
    folds: int = 5
    seed: int = 0
    criterion: str = "cv_rmse"
    threads: int = 1

    def __post_init__(self):
        if len(self.bank) == 0 or self.bank.ops[0].spec.kind != "identity":
            raise ConfigError("bank must be nonempty with the identity at index 0")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.folds < 2:
            raise ConfigError("need at least 2 folds")
        if self.criterion not in _CRITERIA:
            raise ConfigError(f"criterion must be one of {_CRITERIA}")


@dataclass
class SelectionTable:
    """Per (operator, K) criterion values with the chosen pair.

    Ties break to the lower operator index, then the lower K, which biases
    toward the identity and toward parsimony.
    """

    values: np.ndarray      # (B, k_max) aggregated over folds (NaN: unavailable)
    per_fold: np.ndarray    # (folds, B, k_max)
    chosen: tuple           # (operator index, component count)
    criterion: str
    maximize: bool
    names: tuple

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["operator", "K", "fold", "criterion"])
        folds, B, kmax = self.per_fold.shape
        for bi in range(B):
            for k in range(kmax):
                for fi in range(folds):
                    v = self.per_fold[fi, bi, k]
                    w.writerow([self.names[bi], k + 1, fi,
                                "" if np.isnan(v) else repr(float(v))])

    def csv_text(self) -> str:
        import io

        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def screen_bank(S: CrossCov, bank: OperatorBank) -> list:
    """S_b = A_b @ S for every bank member; cost independent of n."""
    return [CrossCov(op.forward(S.S)) for op in bank.ops]


def covariance_scores(Sb: np.ndarray, k_max: int) -> np.ndarray:
    """Covariance criterion per component prefix: the negative cumulative
    squared singular values of S_b (more captured covariance is better, and
    the criterion is minimised)."""
    sv = np.linalg.svd(Sb, compute_uv=False)
    energy = np.zeros(k_max)
    m = min(k_max, sv.size)
    energy[:m] = np.cumsum(sv[:m] ** 2)
    if m:
        energy[m:] = energy[m - 1]
    return -energy


def _fold_scores(dtr: CenteredData, Str: CrossCov, op, Xva, Yva, k_cap, k_max,
                 criterion, classes=None):
    """Score one (operator, fold) cell for every component count.

    Returns a k_max vector (NaN marks unavailable counts).  One extraction
    serves all prefixes: SIMPLS components are nested.  When ``classes`` is
    given the metric is held-out balanced accuracy regardless of criterion.
    """
    out = np.full(k_max, np.nan)
    if criterion == "covariance" and classes is None:
        out[:] = covariance_scores(op.forward(Str.S), k_max)
        return out
    counters.increment("inner_pls_extractions")
    fit = simpls_extract(Str, dtr, op, k_cap)
    if fit.degenerate:
        ref = dtr.y_mean[None, :].repeat(Xva.shape[0], axis=0)
        out[:] = _score(ref, Yva, criterion, classes)
        return out
    t_va = (Xva - dtr.x_mean) @ fit.Z
    maps = prefix_response_maps(fit)
    for k in range(1, fit.n_components + 1):
        yhat = t_va[:, :k] @ maps[k - 1] + dtr.y_mean
        out[k - 1] = _score(yhat, Yva, criterion, classes)
    return out


def _score(yhat, Yva, criterion, classes):
    if classes is not None:
        return balanced_accuracy(
            classes[np.argmax(yhat, axis=1)], classes[np.argmax(Yva, axis=1)]
        )
    if criterion == "press":
        return float(np.sum((yhat - Yva) ** 2))
    return float(np.sqrt(np.mean((yhat - Yva) ** 2)))


def _select(d: CenteredData, cfg: AomPlsConfig, labels=None, classes=None):
    n = d.n
    if n < cfg.folds:
        raise DataError(f"{n} samples cannot fill {cfg.folds} folds")
    plan = kfold_plan(n, cfg.folds, cfg.seed, labels=labels)
    B = len(cfg.bank)
    maximize = classes is not None
    per_fold = np.full((cfg.folds, B, cfg.k_max), np.nan)
    fold_data = []
    for tr, va in plan.folds:
        dtr = center(d.Xc[tr], d.Yc[tr])
        Str = cross_covariance(dtr)
        k_cap = min(cfg.k_max, len(tr) - 1, d.p)
        fold_data.append((dtr, Str, d.Xc[va], d.Yc[va], k_cap))

    def run(cell):
        fi, bi = cell
        dtr, Str, Xva, Yva, k_cap = fold_data[fi]
        return fi, bi, _fold_scores(
            dtr, Str, cfg.bank.ops[bi], Xva, Yva, k_cap, cfg.k_max,
            cfg.criterion, classes=classes,
        )

    cells = [(fi, bi) for fi in range(cfg.folds) for bi in range(B)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    for fi, bi, scores in results:
        per_fold[fi, bi, :] = scores

    available = ~np.isnan(per_fold).any(axis=0)
    values = np.full((B, cfg.k_max), np.nan)
    values[available] = per_fold[:, available].mean(axis=0)
    if not available.any():
        raise DataError("no (operator, K) cell is feasible under the fold plan")
    key = np.where(available, values, np.inf)
    if maximize:
        key = np.where(available, -values, np.inf)
    flat = int(np.argmin(key))  # row-major flat index: ties fall to lower b, then lower K
    chosen = (flat // cfg.k_max, flat % cfg.k_max + 1)
    return SelectionTable(values, per_fold, chosen, cfg.criterion, maximize,
                          cfg.bank.names)


def select_global(d: CenteredData, cfg: AomPlsConfig) -> SelectionTable:
    """Inner-CV selection of one (operator, K) pair for the whole model.

    Each fold recomputes the cross-covariance from its training rows only;
    held-out rows never influence the screened summary.
    """
    return _select(d, cfg)


def fit_aom_pls(X, Y, cfg: AomPlsConfig) -> PlsFit:
    """Select (operator, K) by inner CV, then refit on all rows.

    The returned fit carries the winning operator index and the full
    selection table for audit.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    d = center(X, Y)
    table = select_global(d, cfg)
    bi, K = table.chosen
    S = cross_covariance(d)
    fit = simpls_extract(S, d, cfg.bank.ops[bi], K, operator_id=bi)
    fit.selection = table
    return fit


@dataclass
class ClassifierFit:
    """PLS-DA model: one-hot PLS fit plus the class decoding."""

    pls: PlsFit
    classes: np.ndarray
    selection: SelectionTable = None

    @property
    def operator_id(self):
        return self.pls.operator_id


def fit_aom_plsda(X, labels, cfg: AomPlsConfig) -> ClassifierFit:
    """Operator-adaptive PLS-DA: one-hot encode, center the indicators like
    any response, select (operator, K) by held-out balanced accuracy on
    stratified folds (maximised), refit, and predict by argmax."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ConfigError("classification needs at least 2 classes")
    Y = (labels[:, None] == classes[None, :]).astype(np.float64)
    _find_nonfinite(X, "X")
    d = center(X, Y)
    table = _select(d, cfg, labels=labels, classes=classes)
    bi, K = table.chosen
    S = cross_covariance(d)
    fit = simpls_extract(S, d, cfg.bank.ops[bi], K, operator_id=bi)
    fit.selection = table
    return ClassifierFit(fit, classes, table)


def predict_labels(clf: ClassifierFit, Xnew) -> np.ndarray:
    scores = predict(clf.pls, Xnew)
    return clf.classes[np.argmax(scores, axis=1)]
