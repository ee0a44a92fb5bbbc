import numpy as np
import pytest

from opfold import operators as ops
from opfold.errors import DataError
from opfold.oracle import reference_pls, reference_pls_nipals
from opfold.pls_engine import (
    center,
    cross_covariance,
    nipals_adjoint_extract,
    predict,
    predict_prefix,
    recover_coefficients,
    simpls_extract,
)

RNG = np.random.default_rng(7)


def _rmsep(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


# ---------------------------------------------------------------------------
# center / cross_covariance
# ---------------------------------------------------------------------------

def test_center_two_sample_example():
    d = center(np.array([[1.0], [3.0]]), np.array([0.0, 0.0]))
    assert np.array_equal(d.Xc, np.array([[-1.0], [1.0]]))
    assert np.array_equal(d.x_mean, np.array([2.0]))


def test_center_already_centered_unchanged():
    X = np.array([[1.0, -2.0], [-1.0, 2.0]])
    d = center(X, np.array([1.0, -1.0]))
    assert np.abs(d.Xc - X).max() == 0.0
    assert np.abs(d.x_mean).max() == 0.0


def test_center_random_means_vanish():
    X = RNG.standard_normal((20, 8))
    Y = RNG.standard_normal((20, 2))
    d = center(X, Y)
    assert np.abs(d.Xc.mean(axis=0)).max() < 1e-12
    assert np.abs(d.Yc.mean(axis=0)).max() < 1e-12


def test_center_rejects_nonfinite_with_coordinates():
    X = RNG.standard_normal((5, 4))
    X[2, 3] = np.nan
    with pytest.raises(DataError, match="row 2, column 3"):
        center(X, np.zeros(5))


def test_cross_covariance_hand_example():
    d = center(np.array([[0.0], [2.0]]), np.array([-2.0, 2.0]))
    S = cross_covariance(d)
    assert np.array_equal(S.S, np.array([[4.0]]))


def test_cross_covariance_orthogonal_response():
    Xc = np.array([[1.0, 0.0], [-1.0, 0.0]])
    d = center(Xc, np.array([0.0, 0.0]))
    d.Yc = np.array([[1.0], [1.0]])  # orthogonal to both columns
    assert np.abs(cross_covariance(d).S).max() == 0.0


def test_cross_covariance_matches_naive_loops():
    X = RNG.standard_normal((9, 4))
    Y = RNG.standard_normal((9, 2))
    d = center(X, Y)
    S = cross_covariance(d).S
    naive = np.zeros((4, 2))
    for i in range(4):
        for j in range(2):
            for s in range(9):
                naive[i, j] += d.Xc[s, i] * d.Yc[s, j]
    assert np.abs(S - naive).max() < 1e-12


# ---------------------------------------------------------------------------
# simpls_extract
# ---------------------------------------------------------------------------

def test_rank_one_data_exact_fit():
    p, n = 30, 12
    u = RNG.standard_normal(p)
    X = np.outer(RNG.standard_normal(n), u)
    y = X @ u
    d = center(X, y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), p), 1)
    assert _rmsep(predict(fit, X), y[:, None]) < 1e-10


def test_identity_matches_reference():
    X = RNG.standard_normal((25, 40))
    Y = RNG.standard_normal((25, 1))
    d = center(X, Y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 40), 5)
    ref = reference_pls(X, Y, 5)
    assert np.abs(fit.B - ref.B).max() < 1e-6


@pytest.mark.parametrize("bank_index", [1, 3, 6, 8])
def test_folded_matches_materialised_reference(bank_index):
    X = RNG.standard_normal((30, 50))
    Y = RNG.standard_normal((30, 2))
    d = center(X, Y)
    bank = ops.compact_bank(50)
    op = bank.ops[bank_index]
    A = ops.materialise(op)
    fit = simpls_extract(cross_covariance(d), d, op, 4)
    ref = reference_pls(X @ A.T, Y, 4)
    assert np.abs(fit.B - A.T @ ref.B).max() < 1e-6
    assert np.abs(predict(fit, X) - ref.predict(X @ A.T)).max() < 1e-6


def test_extraction_stops_at_rank():
    p, n, r = 20, 15, 3
    X = RNG.standard_normal((n, r)) @ RNG.standard_normal((r, p))
    y = RNG.standard_normal(n)
    d = center(X, y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), p), 10)
    assert fit.n_components <= r


def test_zero_cross_covariance_degenerate():
    X = RNG.standard_normal((10, 6))
    d = center(X, np.zeros(10))
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 6), 3)
    assert fit.degenerate
    assert np.abs(fit.B).max() == 0.0


def test_scores_mutually_orthogonal():
    X = RNG.standard_normal((40, 60))
    Y = RNG.standard_normal((40, 2))
    d = center(X, Y)
    bank = ops.compact_bank(60)
    fit = simpls_extract(cross_covariance(d), d, bank.ops[3], 6)
    T = d.Xc @ fit.Z
    G = T.T @ T
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() / np.abs(np.diag(G)).max() < 1e-8


def test_deflated_covariance_orthogonal_to_loadings():
    from opfold.pls_engine import _simpls_core

    X = RNG.standard_normal((30, 40))
    Y = RNG.standard_normal((30, 1))
    d = center(X, Y)
    bank = ops.compact_bank(40)
    S0 = cross_covariance(d).S
    blocks = _simpls_core(S0, d.Xc, d.Yc, bank.ops[4], 5)
    resid = blocks["loading_basis"].T @ blocks["S_deflated"]
    assert np.abs(resid).max() < 1e-8 * max(np.abs(S0).max(), 1.0)


def test_coefficients_recomputable_from_blocks():
    X = RNG.standard_normal((30, 25))
    Y = RNG.standard_normal((30, 2))
    d = center(X, Y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 25), 5)
    B2 = recover_coefficients(fit.Z, fit.P, fit.Q, fit.T_norms)
    assert np.abs(fit.B - B2).max() < 1e-10


# ---------------------------------------------------------------------------
# nipals_adjoint_extract
# ---------------------------------------------------------------------------

def test_nipals_identity_agrees_with_simpls():
    X = RNG.standard_normal((30, 40))
    Y = RNG.standard_normal((30, 1))
    d = center(X, Y)
    op = ops.build_operator(ops.identity(), 40)
    f1 = simpls_extract(cross_covariance(d), d, op, 4)
    f2 = nipals_adjoint_extract(d, op, 4)
    assert abs(_rmsep(predict(f1, X), Y) - _rmsep(predict(f2, X), Y)) < 1e-9


def test_nipals_rank_one_exact():
    p, n = 24, 10
    u = RNG.standard_normal(p)
    X = np.outer(RNG.standard_normal(n), u)
    y = X @ u
    d = center(X, y)
    fit = nipals_adjoint_extract(d, ops.build_operator(ops.identity(), p), 1)
    assert _rmsep(predict(fit, X), y[:, None]) < 1e-10


@pytest.mark.parametrize("bank_index", [2, 5, 7])
def test_nipals_agrees_with_simpls_on_bank_ops(bank_index):
    X = RNG.standard_normal((35, 45))
    Y = RNG.standard_normal((35, 1))
    d = center(X, Y)
    op = ops.compact_bank(45).ops[bank_index]
    f1 = simpls_extract(cross_covariance(d), d, op, 3)
    f2 = nipals_adjoint_extract(d, op, 3)
    assert abs(_rmsep(predict(f1, X), Y) - _rmsep(predict(f2, X), Y)) < 1e-9


def test_nipals_multiresponse_agrees():
    X = RNG.standard_normal((30, 35))
    Y = RNG.standard_normal((30, 3))
    d = center(X, Y)
    op = ops.compact_bank(35).ops[3]
    f1 = simpls_extract(cross_covariance(d), d, op, 4)
    f2 = nipals_adjoint_extract(d, op, 4)
    assert abs(_rmsep(predict(f1, X), Y) - _rmsep(predict(f2, X), Y)) < 1e-9


def test_nipals_nonconvergence_names_component():
    from opfold.errors import NumericError

    X = RNG.standard_normal((20, 25))
    Y = RNG.standard_normal((20, 2))
    d = center(X, Y)
    op = ops.build_operator(ops.identity(), 25)
    with pytest.raises(NumericError, match="component 1"):
        nipals_adjoint_extract(d, op, 2, max_iter=0)


# ---------------------------------------------------------------------------
# recover_coefficients / predict
# ---------------------------------------------------------------------------

def test_recover_coefficients_k1_closed_form():
    z = RNG.standard_normal(10)[:, None]
    p = RNG.standard_normal(10)[:, None]
    q = RNG.standard_normal(2)[:, None]
    B = recover_coefficients(z, p, q)
    expected = z @ np.linalg.inv(p.T @ z) @ q.T
    assert np.abs(B - expected).max() < 1e-12


def test_recover_coefficients_orthonormal_case():
    Q_, _ = np.linalg.qr(RNG.standard_normal((12, 3)))
    q = RNG.standard_normal((2, 3))
    B = recover_coefficients(Q_, Q_, q)
    assert np.abs(B - Q_ @ q.T).max() < 1e-10


def test_predict_at_mean_returns_mean():
    X = RNG.standard_normal((15, 12))
    y = RNG.standard_normal(15)
    d = center(X, y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 12), 3)
    out = predict(fit, fit.x_mean[None, :])
    assert np.abs(out - fit.y_mean).max() < 1e-10


def test_predict_shape_and_finite_guards():
    X = RNG.standard_normal((15, 12))
    y = RNG.standard_normal(15)
    d = center(X, y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 12), 2)
    with pytest.raises(DataError):
        predict(fit, np.zeros((2, 13)))
    bad = np.zeros((2, 12))
    bad[1, 4] = np.inf
    with pytest.raises(DataError):
        predict(fit, bad)


def test_prefix_predictions_match_truncated_fits():
    X = RNG.standard_normal((30, 20))
    y = RNG.standard_normal(30)
    d = center(X, y)
    op = ops.build_operator(ops.identity(), 20)
    full = simpls_extract(cross_covariance(d), d, op, 6)
    for k in (1, 3, 6):
        short = simpls_extract(cross_covariance(d), d, op, k)
        assert np.abs(
            predict_prefix(full, X, k) - predict(short, X)
        ).max() < 1e-9


def test_cross_covariance_identity_all_bank_ops():
    X = RNG.standard_normal((25, 40))
    Y = RNG.standard_normal((25, 2))
    d = center(X, Y)
    S = cross_covariance(d).S
    for op in ops.compact_bank(40).ops:
        lhs = ops.apply_forward(op, S)
        rhs = ops.apply_rows(op, d.Xc).T @ d.Yc
        assert np.abs(lhs - rhs).max() < 1e-10
