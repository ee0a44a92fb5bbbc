"""Covariance-space PLS with operator folding.

Two extraction engines produce the same model: ``simpls_extract`` works on
the operator-screened cross-covariance S_b = A_b @ S, and
``nipals_adjoint_extract`` runs residual power iterations in which the
operator only ever enters through structured forward/adjoint applications.
Both return coefficients on the original wavelength grid, so prediction is a
plain dot product with no preprocessing replay.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import counters
from .errors import DataError, NumericError
from .operators import LinOp

log = logging.getLogger(__name__)

# Singular values below this fraction of the first component's scale count
# as rank exhaustion; extraction stops early.
_RANK_EPS = 1e-12
_PINV_RCOND = 1e-10


@dataclass
class CenteredData:
    """Column-centered spectra and responses with their means."""

    Xc: np.ndarray
    Yc: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray

    @property
    def n(self):
        return self.Xc.shape[0]

    @property
    def p(self):
        return self.Xc.shape[1]

    @property
    def q(self):
        return self.Yc.shape[1]


@dataclass
class CrossCov:
    """The p x q cross-covariance S = Xc.T @ Yc."""

    S: np.ndarray


@dataclass
class PlsFit:
    """Deployable PLS calibration on the original wavelength grid.

    Z holds original-grid weights with Xc @ Z equal to the (normalised)
    scores; P and Q are the spectral and response loadings against those
    scores; B is the coefficient matrix Z @ pinv(P.T @ Z) @ Q.T.
    """

    Z: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    T_norms: np.ndarray
    B: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    operator_id: int = 0
    n_components: int = 0
    degenerate: bool = False
    selection: object = None


def _find_nonfinite(M, label):
    bad = ~np.isfinite(M)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"non-finite value in {label} at row {r}, column {c}")


def center(X: np.ndarray, Y: np.ndarray) -> CenteredData:
    """Remove column means from spectra and responses, keeping the means."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if X.shape[0] < 2:
        raise DataError("need at least 2 samples to center")
    _find_nonfinite(X, "X")
    _find_nonfinite(Y, "Y")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    return CenteredData(X - x_mean, Y - y_mean, x_mean, y_mean)


def cross_covariance(d: CenteredData) -> CrossCov:
    """S = Xc.T @ Yc, formed once per fit."""
    return CrossCov(d.Xc.T @ d.Yc)


def _leading_left_singular(S, tol=1e-12, max_iter=500):
    """Leading left singular vector of S by power iteration on S @ S.T.

    Runs as two thin products per step (q << p).  Deterministic start: the
    column of S with the largest norm.  Sign fixed so the largest-magnitude
    entry is positive.  A near-tied leading pair makes plain power
    iteration crawl; if the tolerance is not met within the iteration cap,
    the exact thin SVD (O(p q^2), q is small) finishes the job so the
    extracted direction stays within the folding-exactness budget.
    """
    norms = np.linalg.norm(S, axis=0)
    j = int(np.argmax(norms))
    if norms[j] == 0.0:
        return np.zeros(S.shape[0]), 0.0
    r = S[:, j] / norms[j]
    if S.shape[1] == 1:
        sigma = norms[0]
    else:
        converged = False
        for _ in range(max_iter):
            v = S.T @ r
            r_new = S @ v
            nrm = np.linalg.norm(r_new)
            if nrm == 0.0:
                return np.zeros(S.shape[0]), 0.0
            r_new /= nrm
            if r_new @ r < 0:
                r_new = -r_new
            delta = np.abs(r_new - r).max()
            r = r_new
            if delta <= tol:
                converged = True
                break
        if converged:
            sigma = np.linalg.norm(S.T @ r)
        else:
            U, sv, _ = np.linalg.svd(S, full_matrices=False)
            r = U[:, 0]
            sigma = sv[0]
    k = int(np.argmax(np.abs(r)))
    if r[k] < 0:
        r = -r
    return r, sigma


def _gram_schmidt_append(basis, v):
    """Project v against the orthonormal columns of basis, re-orthogonalise
    once, and return the normalised remainder (None if v is in the span)."""
    w = v.copy()
    if basis is not None and basis.shape[1]:
        w -= basis @ (basis.T @ w)
        w -= basis @ (basis.T @ w)
    nrm = np.linalg.norm(w)
    if nrm <= _RANK_EPS * max(np.linalg.norm(v), 1.0):
        return None
    return w / nrm


def _simpls_core(S0, Xc, Yc, op: LinOp, K):
    """Shared SIMPLS loop; returns all blocks plus deflation diagnostics."""
    counters.increment("pls_extractions")
    Sb = op.forward(S0)
    p, q = Sb.shape
    sig0 = None
    Z, P, Q, Tn, That = [], [], [], [], []
    basis = np.empty((p, 0))
    x_scale = np.linalg.norm(Xc)
    for a in range(K):
        r, sigma = _leading_left_singular(Sb)
        if sig0 is None:
            sig0 = sigma
        if sigma <= _RANK_EPS * max(sig0, 1.0):
            break
        z = op.adjoint(r)
        t = Xc @ z
        tn = np.linalg.norm(t)
        if tn <= _RANK_EPS * max(x_scale, 1.0):
            break
        t = t / tn
        z = z / tn
        p_orig = Xc.T @ t
        q_load = Yc.T @ t
        # Deflation happens in the transformed covariance space, so the
        # folded loop is the explicit transformed-space computation.
        p_trans = op.forward(p_orig)
        v = _gram_schmidt_append(basis, p_trans)
        if v is None:
            break
        basis = np.column_stack([basis, v])
        Sb = Sb - np.outer(v, v @ Sb)
        Z.append(z)
        P.append(p_orig)
        Q.append(q_load)
        Tn.append(tn)
        That.append(t)
    blocks = {
        "Z": np.column_stack(Z) if Z else np.empty((p, 0)),
        "P": np.column_stack(P) if P else np.empty((p, 0)),
        "Q": np.column_stack(Q) if Q else np.empty((q, 0)),
        "T_norms": np.asarray(Tn),
        "T": np.column_stack(That) if That else np.empty((Xc.shape[0], 0)),
        "S_deflated": Sb,
        "loading_basis": basis,
    }
    return blocks


def recover_coefficients(Z, P, Q, T_norms=None) -> np.ndarray:
    """B = Z @ pinv(P.T @ Z) @ Q.T (Moore-Penrose, cutoff 1e-10 x max)."""
    if Z.shape[1] == 0:
        return np.zeros((Z.shape[0], Q.shape[0]))
    M = P.T @ Z
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] > 0:
        log.debug("recover_coefficients: cond(P.T Z) = %.3e", sv[0] / sv[-1])
    return Z @ (np.linalg.pinv(M, rcond=_PINV_RCOND) @ Q.T)


def _finish_fit(blocks, d, operator_id):
    B = recover_coefficients(blocks["Z"], blocks["P"], blocks["Q"])
    return PlsFit(
        Z=blocks["Z"],
        P=blocks["P"],
        Q=blocks["Q"],
        T_norms=blocks["T_norms"],
        B=B,
        x_mean=d.x_mean,
        y_mean=d.y_mean,
        operator_id=operator_id,
        n_components=blocks["Z"].shape[1],
        degenerate=blocks["Z"].shape[1] == 0,
    )


def simpls_extract(S0: CrossCov, d: CenteredData, op: LinOp, K: int,
                   operator_id: int = 0) -> PlsFit:
    """Extract K components from S_b = A_b @ S and map them back through
    the adjoint; returns a fit that predicts from raw spectra.

    Stops early if the numerical rank is exhausted (achieved K recorded).
    A zero cross-covariance yields a degenerate fit with B = 0 and the
    ``degenerate`` flag set rather than an error.
    """
    K = int(K)
    if K < 1:
        raise DataError(f"component count must be >= 1, got {K}")
    blocks = _simpls_core(S0.S, d.Xc, d.Yc, op, K)
    return _finish_fit(blocks, d, operator_id)


def nipals_adjoint_extract(d: CenteredData, op: LinOp, K: int,
                           operator_id: int = 0, tol: float = 1e-13,
                           max_iter: int = 1000) -> PlsFit:
    """NIPALS route to the same model: residual power iterations in which
    the operator appears only as forward/adjoint applications on vectors.

    Agrees with ``simpls_extract`` on predictions to iteration tolerance.
    Raises NumericError carrying the component index if an inner iteration
    fails to converge.
    """
    counters.increment("pls_extractions")
    Xc, Yc = d.Xc, d.Yc
    n, p = Xc.shape
    q = Yc.shape[1]
    K = int(K)
    if K < 1:
        raise DataError(f"component count must be >= 1, got {K}")
    Z, P, Q, Tn, That = [], [], [], [], []
    basis = np.empty((p, 0))
    F = Yc.copy()
    y_scale = np.linalg.norm(Yc)
    x_scale = np.linalg.norm(Xc)
    for a in range(K):
        col = int(np.argmax(np.linalg.norm(F, axis=0)))
        u = F[:, col]
        if np.linalg.norm(u) <= _RANK_EPS * max(y_scale, 1.0):
            break
        w = None
        converged = q == 1
        for it in range(max_iter):
            w_new = op.forward(Xc.T @ u)
            if basis.shape[1]:
                w_new = w_new - basis @ (basis.T @ w_new)
            nrm = np.linalg.norm(w_new)
            if nrm <= _RANK_EPS * max(x_scale * np.linalg.norm(u), 1.0):
                w = None
                converged = True
                break
            w_new = w_new / nrm
            if w is not None and w_new @ w < 0:
                w_new = -w_new
            if w is not None and np.abs(w_new - w).max() <= tol:
                w = w_new
                converged = True
                break
            w = w_new
            t = Xc @ op.adjoint(w)
            tn = np.linalg.norm(t)
            if tn == 0.0:
                w = None
                converged = True
                break
            u = F @ (F.T @ (t / tn))
            un = np.linalg.norm(u)
            if un == 0.0:
                converged = True
                break
            u = u / un
            if q == 1:
                converged = True
                break
        if not converged:
            if w is None:
                raise NumericError(f"NIPALS did not converge at component {a + 1}")
            # Near-tied covariance pair stalls the alternation; the exact
            # thin SVD of the projected residual covariance (O(p q^2)) is
            # its fixed point and keeps the engines within budget.
            G = op.forward(Xc.T @ F)
            if basis.shape[1]:
                G = G - basis @ (basis.T @ G)
            Ug, svg, _ = np.linalg.svd(G, full_matrices=False)
            if svg[0] <= _RANK_EPS * max(x_scale * np.linalg.norm(F), 1.0):
                break
            w = Ug[:, 0]
        if w is None:
            break
        k = int(np.argmax(np.abs(w)))
        if w[k] < 0:
            w = -w
        z = op.adjoint(w)
        t = Xc @ z
        tn = np.linalg.norm(t)
        if tn <= _RANK_EPS * max(x_scale, 1.0):
            break
        t = t / tn
        z = z / tn
        p_orig = Xc.T @ t
        q_load = Yc.T @ t
        v = _gram_schmidt_append(basis, op.forward(p_orig))
        if v is None:
            break
        basis = np.column_stack([basis, v])
        F = F - np.outer(t, t @ F)
        Z.append(z)
        P.append(p_orig)
        Q.append(q_load)
        Tn.append(tn)
        That.append(t)
    blocks = {
        "Z": np.column_stack(Z) if Z else np.empty((p, 0)),
        "P": np.column_stack(P) if P else np.empty((p, 0)),
        "Q": np.column_stack(Q) if Q else np.empty((q, 0)),
        "T_norms": np.asarray(Tn),
        "T": np.column_stack(That) if That else np.empty((n, 0)),
    }
    return _finish_fit(blocks, d, operator_id)


def predict(fit: PlsFit, Xnew: np.ndarray) -> np.ndarray:
    """y_hat = (Xnew - x_mean) @ B + y_mean; raw spectra in, no operator
    application at predict time."""
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=np.float64))
    if Xnew.shape[1] != fit.B.shape[0]:
        raise DataError(
            f"spectrum has {Xnew.shape[1]} channels, model expects {fit.B.shape[0]}"
        )
    _find_nonfinite(Xnew, "X")
    return (Xnew - fit.x_mean) @ fit.B + fit.y_mean


def prefix_response_maps(fit: PlsFit) -> list:
    """Per-prefix maps M_K with y_hat = y_mean + T_hat[:, :K] @ M_K.

    One extraction scores every component count: SIMPLS prefixes are nested,
    so the K-component model is the first K columns of the full fit.
    """
    maps = []
    for k in range(1, fit.n_components + 1):
        M = np.linalg.pinv(fit.P[:, :k].T @ fit.Z[:, :k], rcond=_PINV_RCOND)
        maps.append(M @ fit.Q[:, :k].T)
    return maps


def predict_prefix(fit: PlsFit, Xnew: np.ndarray, K: int) -> np.ndarray:
    """Prediction using only the first K components of a fitted model."""
    if K > fit.n_components:
        raise DataError(f"model has {fit.n_components} components, asked for {K}")
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=np.float64))
    t = (Xnew - fit.x_mean) @ fit.Z[:, :K]
    M = np.linalg.pinv(fit.P[:, :K].T @ fit.Z[:, :K], rcond=_PINV_RCOND)
    return t @ (M @ fit.Q[:, :K].T) + fit.y_mean
