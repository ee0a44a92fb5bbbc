"""Dual Ridge with operator-induced kernels.

An operator enters Ridge only through the n x n kernel
K_b = (Xc A_b.T)(Xc A_b.T).T, so a bank is screened by swapping kernels, and
the original-grid coefficients come back through
beta = A.T (A (Xc.T C)).  One eigendecomposition per training kernel serves
the whole regularization grid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError, NumericError
from .operators import LinOp, OperatorBank, apply_rows
from .pls_engine import CenteredData, center, _find_nonfinite
from .selection_stats import kfold_plan


def default_alpha_grid() -> np.ndarray:
    return np.logspace(-6.0, 3.0, 50)


@dataclass
class AomRidgeConfig:
    bank: OperatorBank
    alpha_grid: np.ndarray = field(default_factory=default_alpha_grid)
    folds: int = 5
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=np.float64)
        if self.alpha_grid.size == 0 or (self.alpha_grid <= 0).any():
            raise ConfigError("alpha grid must be positive")
        if self.folds < 2:
            raise ConfigError("need at least 2 folds")


@dataclass
class RidgeFit:
    """Deployable ridge calibration: raw-spectrum coefficients plus the dual
    variables they were recovered from."""

    beta: np.ndarray
    alpha: float
    x_mean: np.ndarray
    y_mean: np.ndarray
    operator_id: int | None = None
    mixture_weights: np.ndarray | None = None
    dual: np.ndarray | None = None
    selection: object = None


def operator_kernel(d: CenteredData, op: LinOp) -> np.ndarray:
    """K_b = W W.T with W = Xc A.T formed once; symmetric PSD."""
    W = apply_rows(op, d.Xc)
    K = W @ W.T
    return 0.5 * (K + K.T)


def dual_solve(K: np.ndarray, alpha: float, Yc: np.ndarray) -> np.ndarray:
    """Solve (K + alpha I) C = Yc by SPD factorisation."""
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    n = K.shape[0]
    try:
        cf = scipy.linalg.cho_factor(K + alpha * np.eye(n), lower=True)
        return scipy.linalg.cho_solve(cf, Yc)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(
            f"kernel factorisation failed (alpha={alpha}, trace={np.trace(K):.3e}, "
            f"min diag={K.diagonal().min():.3e})"
        ) from exc


def dual_solve_grid(K: np.ndarray, alphas, Yc: np.ndarray):
    """Dual coefficients for every alpha from one eigendecomposition of K.

    Yields the same C as independent factorisations to ~1e-10; cost is one
    O(n^3) eigh plus O(n^2 q) per alpha.
    """
    lam, U = np.linalg.eigh(K)
    UtY = U.T @ Yc
    for alpha in alphas:
        yield U @ (UtY / (lam + alpha)[:, None])


def ridge_coefficients(op: LinOp, d: CenteredData, C: np.ndarray) -> np.ndarray:
    """Original-space beta = A.T (A (Xc.T C)); never forms a wide block."""
    return op.adjoint(op.forward(d.Xc.T @ C))


def default_mixture_scales(d: CenteredData, ops) -> np.ndarray:
    """Root-mean-square block scales: s_b = 1/rms(Xc A_b.T), so every block
    carries roughly the same Frobenius norm in the stacked problem."""
    scales = []
    for op in ops:
        W = apply_rows(op, d.Xc)
        rms = np.linalg.norm(W) / np.sqrt(W.size)
        scales.append(1.0 / rms if rms > 0 else 0.0)
    return np.asarray(scales)


def mixture_kernel(d: CenteredData, ops, scales=None):
    """Weighted operator mixture: K = sum_b s_b^2 K_b plus a closure that
    recovers beta = sum_b s_b^2 A_b.T A_b Xc.T C on the original grid."""
    ops = list(ops)
    if scales is None:
        scales = default_mixture_scales(d, ops)
    scales = np.asarray(scales, dtype=np.float64)
    if len(ops) != scales.size or not ops:
        raise ConfigError("mixture needs matching operators and scales")
    if (scales < 0).any() or not (scales > 0).any():
        raise ConfigError("mixture scales must be >= 0 with at least one positive")
    K = np.zeros((d.n, d.n))
    for s, op in zip(scales, ops):
        if s == 0:
            continue
        K += (s * s) * operator_kernel(d, op)

    def recover(C):
        beta = np.zeros((d.p, C.shape[1]))
        XtC = d.Xc.T @ C
        for s, op in zip(scales, ops):
            if s == 0:
                continue
            beta += (s * s) * op.adjoint(op.forward(XtC))
        return beta

    return K, recover


def _cell_scores_for_operator(op, X, Y, plan, alphas):
    """Mean held-out RMSE for one operator across the alpha grid."""
    errs = np.zeros((len(plan.folds), alphas.size))
    for fi, (tr, va) in enumerate(plan.folds):
        d = center(X[tr], Y[tr])
        K_tr = operator_kernel(d, op)
        W_tr = apply_rows(op, d.Xc)
        W_va = apply_rows(op, X[va] - d.x_mean)
        Kva = W_va @ W_tr.T
        for ai, C in enumerate(dual_solve_grid(K_tr, alphas, d.Yc)):
            resid = Kva @ C + d.y_mean - Y[va]
            errs[fi, ai] = np.sqrt(np.mean(resid**2))
    return errs


@dataclass
class RidgeSelectionTable:
    values: np.ndarray        # (B, n_alpha) mean held-out RMSE
    per_fold: np.ndarray      # (folds, B, n_alpha)
    alphas: np.ndarray
    chosen: tuple             # (operator index, alpha index)
    names: tuple

    def to_csv(self, fh) -> None:
        import csv

        w = csv.writer(fh)
        w.writerow(["operator", "alpha", "fold", "criterion"])
        for bi, name in enumerate(self.names):
            for ai, alpha in enumerate(self.alphas):
                for fi in range(self.per_fold.shape[0]):
                    w.writerow([name, repr(float(alpha)), fi,
                                repr(float(self.per_fold[fi, bi, ai]))])


def screen_ridge(X, Y, cfg: AomRidgeConfig) -> RidgeSelectionTable:
    """CV grid over (operator, alpha); one kernel eigendecomposition per
    (operator, fold) serves the whole alpha sweep."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    _find_nonfinite(X, "X")
    _find_nonfinite(Y, "Y")
    n = X.shape[0]
    if n < cfg.folds:
        raise DataError(f"{n} samples cannot fill {cfg.folds} folds")
    plan = kfold_plan(n, cfg.folds, cfg.seed)
    B = len(cfg.bank)
    per_fold = np.zeros((cfg.folds, B, cfg.alpha_grid.size))

    def run(bi):
        return bi, _cell_scores_for_operator(cfg.bank.ops[bi], X, Y, plan, cfg.alpha_grid)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for bi, errs in pool.map(run, range(B)):
                per_fold[:, bi, :] = errs
    else:
        for bi in range(B):
            per_fold[:, bi, :] = run(bi)[1]
    values = per_fold.mean(axis=0)
    flat = int(np.argmin(values))  # row-major: lower operator index wins ties
    chosen = (flat // cfg.alpha_grid.size, flat % cfg.alpha_grid.size)
    return RidgeSelectionTable(values, per_fold, cfg.alpha_grid, chosen, cfg.bank.names)


def fit_aom_ridge(X, Y, cfg: AomRidgeConfig) -> RidgeFit:
    """Global hard selection over the (operator, alpha) grid, then a full
    refit with the winning pair."""
    table = screen_ridge(X, Y, cfg)
    bi, ai = table.chosen
    op = cfg.bank.ops[bi]
    alpha = float(cfg.alpha_grid[ai])
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    d = center(X, Y)
    K = operator_kernel(d, op)
    C = dual_solve(K, alpha, d.Yc)
    beta = ridge_coefficients(op, d, C)
    return RidgeFit(
        beta=beta,
        alpha=alpha,
        x_mean=d.x_mean,
        y_mean=d.y_mean,
        operator_id=bi,
        dual=C,
        selection=table,
    )


def predict_ridge(fit: RidgeFit, Xnew) -> np.ndarray:
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=np.float64))
    if Xnew.shape[1] != fit.beta.shape[0]:
        raise DataError(
            f"spectrum has {Xnew.shape[1]} channels, model expects {fit.beta.shape[0]}"
        )
    return (Xnew - fit.x_mean) @ fit.beta + fit.y_mean
