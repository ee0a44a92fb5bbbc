"""Cheap screening of operator chains.

Chains of strict-linear operators compose into fixed matrices, so a whole
chain space is scored on the cross-covariance with matrix-vector work: the
score is a Cauchy-Schwarz ratio in [0, 1] whose denominator is approximated
from a truncated SVD of the spectra.  Survivors are combined by
non-negative least squares into a single weighted operator and fitted as a
PLS-then-ridge calibration.

The scoring base is the raw spectra matrix, which keeps the whole pipeline
strictly linear.  ``chain_score`` itself is base-agnostic: it consumes a
precomputed (SVD, base.T @ y) pair, so a transformed base can be screened
by swapping those inputs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .operators import LinOp, OperatorBank, compose, lincomb
from .pls_engine import (
    center,
    cross_covariance,
    predict_prefix,
    prefix_response_maps,
    simpls_extract,
)
from .selection_stats import kfold_plan

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Chain enumeration
# ---------------------------------------------------------------------------

def enumerate_chains(bank: OperatorBank, depth: int) -> list:
    """All ordered operator-index tuples up to the given depth.

    Identity members are dropped and chains differing only by identity
    padding merge, so the identity chain appears exactly once as ().
    """
    if depth < 1:
        raise ConfigError("chain depth must be >= 1")
    non_id = [i for i in range(len(bank)) if i != 0]
    chains = [()]
    level = [()]
    for _ in range(depth):
        level = [c + (i,) for c in level for i in non_id]
        chains.extend(level)
    return chains


def chain_operator(bank: OperatorBank, chain: tuple) -> LinOp:
    """Compose a chain tuple; members apply right-to-left (last first)."""
    if not chain:
        return bank.ops[0]
    return compose([bank.ops[i] for i in chain])


def chain_label(bank: OperatorBank, chain: tuple) -> str:
    if not chain:
        return bank.names[0]
    return "|".join(bank.names[i] for i in chain)


# ---------------------------------------------------------------------------
# Truncated SVD
# ---------------------------------------------------------------------------

def truncated_svd(M: np.ndarray, rank: int, seed: int = 0, tol: float = 1e-12,
                  max_iter: int = 500):
    """Leading rank-r factors (U, s, V) of M by blocked subspace iteration.

    Deterministic for a given seed.  Convergence is measured on the captured
    energy of the leading block (the quantity that controls approximation
    quality), so clustered trailing singular values may keep rotating inside
    an already-optimal subspace without stalling the loop.  Raises
    NumericError with iteration diagnostics on true non-convergence.  When
    the block spans the whole domain the projection is exact with no
    iteration.
    """
    M = np.asarray(M, dtype=np.float64)
    n, p = M.shape
    if not 1 <= rank <= min(n, p):
        raise ConfigError(f"rank must be in [1, {min(n, p)}], got {rank}")
    rng = np.random.default_rng(seed)
    block = min(rank + 8, p)
    Q = np.linalg.qr(rng.standard_normal((p, block)))[0]
    if block < p:  # a full-domain block needs no iteration
        prev = None
        last_change = np.inf
        plateau = 0
        for _ in range(max_iter):
            Q, _ = np.linalg.qr(M.T @ (M @ Q))
            energy = float(np.sum((M @ Q) ** 2))
            if prev is not None:
                last_change = abs(energy - prev) / max(energy, 1e-300)
                if last_change <= tol:
                    break
                # Clustered spectra rotate inside an already-optimal block:
                # a sustained slow phase is convergence, not failure.
                plateau = plateau + 1 if last_change <= 1e-7 else 0
                if plateau >= 5:
                    break
            prev = energy
        else:
            raise NumericError(
                f"truncated SVD did not converge in {max_iter} iterations "
                f"(last relative energy change {last_change:.3e})"
            )
    B = M @ Q
    Ub, sb, Vtb = np.linalg.svd(B, full_matrices=False)
    U = Ub[:, :rank]
    s = sb[:rank]
    V = Q @ Vtb.T[:, :rank]
    return U, s, V


# ---------------------------------------------------------------------------
# Chain scoring
# ---------------------------------------------------------------------------

def chain_score(op: LinOp, svd, Xty: np.ndarray, y_norm_sq: float,
                clamp_log=None) -> float:
    """Cauchy-Schwarz alignment of a chain with the response direction.

    numerator  ||(X A_s.T).T y||^2 = ||A_s (X.T y)||^2, evaluated as
    structured applications on the cross-covariance vector alone;
    denominator ||X A_s.T||_F^2 * ||y||^2, the Frobenius part approximated
    as sum_i s_i^2 ||A_s v_i||^2 over the truncated SVD of X.

    Clamped to [0, 1]; a zero response scores 0.
    """
    if y_norm_sq <= 0.0:
        return 0.0
    _, s, V = svd
    num = float(np.sum(op.forward(Xty) ** 2))
    AV = op.forward(V)
    den = float(np.sum((s**2) * np.sum(AV**2, axis=0)))
    if den <= 0.0:
        return 0.0
    score = num / (den * y_norm_sq)
    if score > 1.0:
        if clamp_log is not None:
            clamp_log.append(score - 1.0)
        log.debug("chain score clamped: %.3e above 1", score - 1.0)
        score = 1.0
    return max(score, 0.0)


# ---------------------------------------------------------------------------
# Non-negative least squares (active set)
# ---------------------------------------------------------------------------

def nnls(M: np.ndarray, b: np.ndarray, max_iter: int | None = None):
    """Minimise ||M w - b||_2 subject to w >= 0 (Lawson-Hanson active set).

    Returns w with KKT residual <= 1e-8 on the passive set; raises
    NumericError if the iteration cap is exceeded.
    """
    M = np.asarray(M, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if not np.isfinite(M).all() or not np.isfinite(b).all():
        raise DataError("nnls needs finite inputs")
    k, m = M.shape
    if b.size != k:
        raise DataError(f"b has length {b.size}, expected {k}")
    if max_iter is None:
        max_iter = 3 * m + 30
    w = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    grad = M.T @ (b - M @ w)
    tol = 1e-10 * max(np.abs(grad).max(), 1.0)
    for _ in range(max_iter):
        if passive.all() or grad[~passive].max(initial=-np.inf) <= tol:
            break
        j = int(np.flatnonzero(~passive)[np.argmax(grad[~passive])])
        passive[j] = True
        while True:
            z = np.zeros(m)
            cols = np.flatnonzero(passive)
            z[cols] = np.linalg.lstsq(M[:, cols], b, rcond=None)[0]
            if (z[cols] > 0).all():
                w = z
                break
            # Step back to the boundary and drop the blocking variables.
            neg = cols[z[cols] <= 0]
            denom = w[neg] - z[neg]
            ratios = np.where(denom > 0, w[neg] / np.where(denom > 0, denom, 1.0), 0.0)
            alpha = float(ratios.min())
            w = w + alpha * (z - w)
            passive[w <= 1e-14] = False
            w[~passive] = 0.0
        grad = M.T @ (b - M @ w)
    else:
        raise NumericError(f"nnls exceeded {max_iter} active-set iterations")
    return w


def nnls_kkt_residual(M, b, w) -> float:
    """Max KKT violation: gradient on the support plus negative-gradient
    slack off it (and any negativity in w)."""
    g = M.T @ (M @ w - b)
    on = w > 0
    res = 0.0
    if on.any():
        res = float(np.abs(g[on]).max())
    if (~on).any():
        res = max(res, float(max(0.0, -(g[~on].min()))))
    res = max(res, float(max(0.0, -(w.min() if w.size else 0.0))))
    return res


# ---------------------------------------------------------------------------
# FastAOM fit
# ---------------------------------------------------------------------------

@dataclass
class ChainCandidate:
    chain: tuple
    score: float
    label: str = ""


@dataclass
class FastAomConfig:
    bank: OperatorBank
    depth: int = 2
    svd_rank: int | None = None
    top_m: int = 8
    folds: int = 5
    seed: int = 0
    k_max: int = 15

    def __post_init__(self):
        if self.depth < 1 or self.top_m < 1 or self.k_max < 1:
            raise ConfigError("depth, top_m and k_max must be >= 1")
        if self.folds < 2:
            raise ConfigError("need at least 2 folds")


@dataclass
class FastAomFit:
    survivors: list
    weights: np.ndarray
    pls_stage: object
    ridge_alpha: float
    beta: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    clamp_overshoots: list = field(default_factory=list)


def score_all_chains(S: np.ndarray, svd, bank: OperatorBank, depth: int,
                     y_norm_sq: float, clamp_log=None):
    """Score every enumerated chain on the cross-covariance; wall time is
    independent of the sample count once S and the SVD exist."""
    chains = enumerate_chains(bank, depth)
    Xty = np.asarray(S, dtype=np.float64).ravel()
    out = []
    for chain in chains:
        op = chain_operator(bank, chain)
        sc = chain_score(op, svd, Xty, y_norm_sq, clamp_log=clamp_log)
        out.append(ChainCandidate(chain, sc, chain_label(bank, chain)))
    return out


def fit_fastaom(X, y, cfg: FastAomConfig) -> FastAomFit:
    """Screen chains, keep the top scorers, weight them by NNLS on
    out-of-fold single-component predictions, and fit the weighted operator
    as a PLS stage finished by a small ridge on the scores.

    Single-response only; every stage sees training rows alone.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        if y.shape[1] != 1:
            raise ConfigError("fastaom is defined for a single response")
        y = y[:, 0]
    n, p = X.shape
    d = center(X, y)
    S = cross_covariance(d)
    rank = cfg.svd_rank if cfg.svd_rank is not None else min(n, p, 100)
    rank = min(rank, n - 1 if n <= p else min(n, p))
    svd = truncated_svd(d.Xc, rank, seed=cfg.seed)
    clamp_log: list = []
    scored = score_all_chains(
        S.S, svd, cfg.bank, cfg.depth, float(np.sum(d.Yc**2)), clamp_log=clamp_log
    )
    scored.sort(key=lambda c: (-c.score, c.chain))
    survivors = scored[: min(cfg.top_m, len(scored))]

    # Out-of-fold one-component predictions per surviving chain.
    plan = kfold_plan(n, cfg.folds, cfg.seed)
    preds = np.zeros((n, len(survivors)))
    for ci, cand in enumerate(survivors):
        op = chain_operator(cfg.bank, cand.chain)
        for tr, va in plan.folds:
            dtr = center(X[tr], y[tr])
            fit1 = simpls_extract(cross_covariance(dtr), dtr, op, 1)
            preds[va, ci] = (
                (X[va] - fit1.x_mean) @ fit1.B + fit1.y_mean
            ).ravel()
    weights = nnls(preds, y)
    if weights.sum() <= 0:
        weights = np.zeros(len(survivors))
        weights[0] = 1.0
    norm_w = weights / weights.sum()

    keep = norm_w > 0
    mix_ops = [chain_operator(cfg.bank, c.chain) for c, k in zip(survivors, keep) if k]
    mix = lincomb(norm_w[keep], mix_ops)

    # Component count for the mixed operator by the same folds.
    k_cap = min(cfg.k_max, n - 1, p)
    errs = np.full((len(plan.folds), k_cap), np.nan)
    for fi, (tr, va) in enumerate(plan.folds):
        dtr = center(X[tr], y[tr])
        kf = min(k_cap, len(tr) - 1)
        fit = simpls_extract(cross_covariance(dtr), dtr, mix, kf)
        maps = prefix_response_maps(fit)
        t_va = (X[va] - fit.x_mean) @ fit.Z
        for k in range(1, fit.n_components + 1):
            yhat = t_va[:, :k] @ maps[k - 1] + fit.y_mean
            errs[fi, k - 1] = np.sqrt(np.mean((yhat - y[va, None]) ** 2))
    mean_err = errs.mean(axis=0)
    if np.isnan(mean_err).all():
        # Degenerate response: every fold extraction collapsed.  The final
        # fit below then carries zero components and a zero coefficient,
        # keeping the screening loop total.
        K_star = 1
    else:
        K_star = int(np.nanargmin(mean_err)) + 1

    pls_fit = simpls_extract(S, d, mix, K_star)
    if pls_fit.n_components == 0:
        alpha = 0.0
        beta = np.zeros((p, 1))
    else:
        T = d.Xc @ pls_fit.Z
        alpha = 1e-6 * float(np.sum(T**2)) / n
        G = T.T @ T + alpha * np.eye(T.shape[1])
        gamma = np.linalg.solve(G, T.T @ d.Yc)
        beta = pls_fit.Z @ gamma
    return FastAomFit(
        survivors=survivors,
        weights=norm_w,
        pls_stage=pls_fit,
        ridge_alpha=alpha,
        beta=beta,
        x_mean=d.x_mean,
        y_mean=d.y_mean,
        clamp_overshoots=clamp_log,
    )


def predict_fastaom(fit: FastAomFit, Xnew) -> np.ndarray:
    """Raw-spectrum prediction from the combined coefficient alone."""
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=np.float64))
    if Xnew.shape[1] != fit.beta.shape[0]:
        raise DataError(
            f"spectrum has {Xnew.shape[1]} channels, model expects {fit.beta.shape[0]}"
        )
    return (Xnew - fit.x_mean) @ fit.beta + fit.y_mean


def survivors_to_csv(fit: FastAomFit, fh) -> None:
    w = csv.writer(fh)
    w.writerow(["chain", "score", "weight"])
    for cand, weight in zip(fit.survivors, fit.weights):
        w.writerow([cand.label, repr(float(cand.score)), repr(float(weight))])
