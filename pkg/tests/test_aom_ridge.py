import numpy as np
import pytest

from opfold import operators as ops
from opfold.aom_ridge import (
    AomRidgeConfig,
    default_mixture_scales,
    dual_solve,
    dual_solve_grid,
    fit_aom_ridge,
    mixture_kernel,
    operator_kernel,
    predict_ridge,
    ridge_coefficients,
    screen_ridge,
)
from opfold.errors import ConfigError
from opfold.oracle import reference_ridge
from opfold.pls_engine import center

RNG = np.random.default_rng(13)


def _toy(n=30, p=50, q=2, seed=3):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p)), rng.standard_normal((n, q))


# ---------------------------------------------------------------------------
# operator_kernel / dual_solve
# ---------------------------------------------------------------------------

def test_identity_kernel_is_gram_matrix():
    X, Y = _toy()
    d = center(X, Y)
    K = operator_kernel(d, ops.build_operator(ops.identity(), 50))
    assert np.abs(K - d.Xc @ d.Xc.T).max() < 1e-12


def test_kernel_symmetric_psd():
    X, Y = _toy(seed=5)
    d = center(X, Y)
    for bi in (1, 4, 6, 8):
        K = operator_kernel(d, ops.compact_bank(50).ops[bi])
        assert np.abs(K - K.T).max() < 1e-12
        assert np.linalg.eigvalsh(K).min() > -1e-8


def test_kernel_matches_dense_oracle():
    X, Y = _toy(seed=7)
    d = center(X, Y)
    op = ops.compact_bank(50).ops[3]
    A = ops.materialise(op)
    W = d.Xc @ A.T
    assert np.abs(operator_kernel(d, op) - W @ W.T).max() < 1e-10


def test_dual_solve_hand_case():
    d = center(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 1.0]))
    K = operator_kernel(d, ops.build_operator(ops.identity(), 2))
    C = dual_solve(K, 1.0, d.Yc)
    assert np.abs(C.ravel() - np.array([-0.25, 0.25])).max() < 1e-12


def test_dual_solve_large_alpha_limit():
    X, Y = _toy(seed=2)
    d = center(X, Y)
    K = operator_kernel(d, ops.build_operator(ops.identity(), 50))
    alpha = 1e12
    C = dual_solve(K, alpha, d.Yc)
    assert np.abs(C - d.Yc / alpha).max() / np.abs(d.Yc / alpha).max() < 1e-6


def test_dual_solve_residual():
    n = 20
    M = RNG.standard_normal((n, n))
    K = M @ M.T
    Yc = RNG.standard_normal((n, 2))
    C = dual_solve(K, 0.3, Yc)
    assert np.abs((K + 0.3 * np.eye(n)) @ C - Yc).max() < 1e-10


def test_dual_solve_rejects_nonpositive_alpha():
    with pytest.raises(ConfigError):
        dual_solve(np.eye(3), 0.0, np.ones((3, 1)))


# ---------------------------------------------------------------------------
# ridge_coefficients
# ---------------------------------------------------------------------------

def test_coefficients_hand_case():
    d = center(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 1.0]))
    op = ops.build_operator(ops.identity(), 2)
    C = dual_solve(operator_kernel(d, op), 1.0, d.Yc)
    beta = ridge_coefficients(op, d, C)
    assert np.abs(beta.ravel() - np.array([-0.25, 0.25])).max() < 1e-12


def test_identity_dual_equals_primal():
    X, Y = _toy(seed=9)
    d = center(X, Y)
    op = ops.build_operator(ops.identity(), 50)
    C = dual_solve(operator_kernel(d, op), 0.7, d.Yc)
    beta = ridge_coefficients(op, d, C)
    assert np.abs(beta - reference_ridge(X, Y, 0.7)).max() < 1e-8


@pytest.mark.parametrize("bank_index", [1, 3, 6, 8])
@pytest.mark.parametrize("alpha", [1e-3, 1.0, 50.0])
def test_dual_primal_equivalence_bank(bank_index, alpha):
    X, Y = _toy(seed=bank_index)
    d = center(X, Y)
    op = ops.compact_bank(50).ops[bank_index]
    A = ops.materialise(op)
    C = dual_solve(operator_kernel(d, op), alpha, d.Yc)
    beta = ridge_coefficients(op, d, C)
    beta_ref = A.T @ reference_ridge(X @ A.T, Y, alpha)
    assert np.abs(beta - beta_ref).max() < 1e-8


def test_detrend_on_pure_ramp_annihilates_beta():
    n, p = 15, 30
    ramp = np.linspace(-1, 1, p)
    X = np.outer(RNG.standard_normal(n), ramp)
    y = RNG.standard_normal(n)
    d = center(X, y)
    op = ops.build_operator(ops.detrend(1), p)
    C = dual_solve(operator_kernel(d, op) + 0 * np.eye(n), 1.0, d.Yc)
    beta = ridge_coefficients(op, d, C)
    assert np.abs(beta).max() < 1e-10


def test_kernel_reuse_sweep_matches_independent_factorisations():
    X, Y = _toy(n=25, p=40, seed=4)
    d = center(X, Y)
    op = ops.compact_bank(40).ops[3]
    K = operator_kernel(d, op)
    alphas = np.logspace(-6, 3, 50)
    swept = list(dual_solve_grid(K, alphas, d.Yc))
    for i, a in enumerate(alphas):
        b_sweep = ridge_coefficients(op, d, swept[i])
        b_chol = ridge_coefficients(op, d, dual_solve(K, a, d.Yc))
        assert np.abs(b_sweep - b_chol).max() < 1e-10


def test_training_residual_monotone_in_alpha():
    X, Y = _toy(n=25, p=40, seed=12)
    d = center(X, Y)
    op = ops.build_operator(ops.identity(), 40)
    K = operator_kernel(d, op)
    resids = []
    for a in np.logspace(-4, 4, 15):
        beta = ridge_coefficients(op, d, dual_solve(K, a, d.Yc))
        resids.append(np.linalg.norm(d.Xc @ beta - d.Yc))
    assert (np.diff(resids) >= -1e-9).all()


# ---------------------------------------------------------------------------
# mixture_kernel
# ---------------------------------------------------------------------------

def test_single_block_mixture_reduces_exactly():
    X, Y = _toy(seed=6)
    d = center(X, Y)
    op = ops.compact_bank(50).ops[2]
    K, recover = mixture_kernel(d, [op], [1.0])
    assert np.abs(K - operator_kernel(d, op)).max() < 1e-12
    C = dual_solve(K, 0.5, d.Yc)
    assert np.abs(recover(C) - ridge_coefficients(op, d, C)).max() < 1e-12


def test_two_identity_blocks_half_scale_equal_one_block():
    X, Y = _toy(seed=8)
    d = center(X, Y)
    op = ops.build_operator(ops.identity(), 50)
    s = np.sqrt(0.5)
    K2, recover2 = mixture_kernel(d, [op, op], [s, s])
    K1, recover1 = mixture_kernel(d, [op], [1.0])
    assert np.abs(K2 - K1).max() < 1e-12
    C = dual_solve(K1, 0.9, d.Yc)
    assert np.abs(recover2(C) - recover1(C)).max() < 1e-12


def test_mixture_matches_wide_block_oracle():
    X, Y = _toy(n=20, p=30, seed=10)
    d = center(X, Y)
    bank = ops.compact_bank(30)
    pair = [bank.ops[1], bank.ops[3]]
    scales = default_mixture_scales(d, pair)
    K, recover = mixture_kernel(d, pair, scales)
    alpha = 0.7
    C = dual_solve(K, alpha, d.Yc)
    beta = recover(C)
    A1, A2 = (ops.materialise(o) for o in pair)
    Z = np.hstack([scales[0] * d.Xc @ A1.T, scales[1] * d.Xc @ A2.T])
    bw = np.linalg.solve(Z.T @ Z + alpha * np.eye(60), Z.T @ d.Yc)
    beta_oracle = scales[0] * A1.T @ bw[:30] + scales[1] * A2.T @ bw[30:]
    assert np.abs(beta - beta_oracle).max() < 1e-8


def test_mixture_rejects_all_zero_scales():
    X, Y = _toy()
    d = center(X, Y)
    with pytest.raises(ConfigError):
        mixture_kernel(d, [ops.build_operator(ops.identity(), 50)], [0.0])


# ---------------------------------------------------------------------------
# fit_aom_ridge
# ---------------------------------------------------------------------------

def test_identity_only_grid_matches_primal_oracle():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((40, 30))
    y = X @ (rng.standard_normal(30) * 0.2) + 0.1 * rng.standard_normal(40)
    bank = ops.bank_from_specs([], 30)
    cfg = AomRidgeConfig(bank=bank, alpha_grid=np.logspace(-3, 2, 12), folds=4, seed=1)
    fit = fit_aom_ridge(X, y, cfg)
    beta_ref = reference_ridge(X, y[:, None], fit.alpha)
    assert fit.operator_id == 0
    assert np.abs(fit.beta - beta_ref).max() < 1e-8


def test_default_grid_is_450_cells():
    cfg = AomRidgeConfig(bank=ops.compact_bank(64))
    assert len(cfg.bank) * cfg.alpha_grid.size == 450


def test_selection_deterministic_and_thread_stable():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 40))
    y = rng.standard_normal(30)
    cfg1 = AomRidgeConfig(bank=ops.compact_bank(40), alpha_grid=np.logspace(-2, 2, 8), folds=3, seed=5)
    cfg2 = AomRidgeConfig(bank=ops.compact_bank(40), alpha_grid=np.logspace(-2, 2, 8), folds=3, seed=5, threads=4)
    t1 = screen_ridge(X, y, cfg1)
    t2 = screen_ridge(X, y, cfg1)
    t4 = screen_ridge(X, y, cfg2)
    assert t1.chosen == t2.chosen == t4.chosen
    assert np.array_equal(t1.values, t2.values)
    assert np.array_equal(t1.values, t4.values)


def test_beta_reproducible_from_stored_dual():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((25, 35))
    y = rng.standard_normal(25)
    cfg = AomRidgeConfig(bank=ops.compact_bank(35), alpha_grid=np.logspace(-2, 1, 5), folds=3, seed=0)
    fit = fit_aom_ridge(X, y, cfg)
    op = cfg.bank.ops[fit.operator_id]
    d = center(X, y)
    beta2 = ridge_coefficients(op, d, fit.dual)
    assert np.abs(fit.beta - beta2).max() < 1e-10


def test_predictions_use_raw_spectra():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((25, 30))
    y = rng.standard_normal(25)
    cfg = AomRidgeConfig(bank=ops.compact_bank(30), alpha_grid=np.logspace(-1, 1, 4), folds=3, seed=0)
    fit = fit_aom_ridge(X, y, cfg)
    out = predict_ridge(fit, fit.x_mean[None, :])
    assert np.abs(out - fit.y_mean).max() < 1e-10
