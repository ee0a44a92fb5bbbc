import numpy as np

from opfold import operators as ops
from opfold.oracle import (
    equivalence_suite,
    plain_cv_pls,
    reference_pls,
    reference_pls_nipals,
    reference_ridge,
)
from opfold.selection_stats import kfold_plan

RNG = np.random.default_rng(11)


def test_reference_pls_identity_case():
    X = RNG.standard_normal((20, 15))
    Y = RNG.standard_normal((20, 1))
    from opfold.pls_engine import center, cross_covariance, simpls_extract

    d = center(X, Y)
    fit = simpls_extract(cross_covariance(d), d, ops.build_operator(ops.identity(), 15), 4)
    ref = reference_pls(X, Y, 4)
    assert np.abs(fit.B - ref.B).max() < 1e-10


def test_reference_pls_rank_one_exact():
    u = RNG.standard_normal(12)
    X = np.outer(RNG.standard_normal(9), u)
    y = (X @ u)[:, None]
    ref = reference_pls(X, y, 1)
    assert np.abs(ref.predict(X) - y).max() < 1e-9


def test_reference_pls_vs_nipals_reference():
    X = RNG.standard_normal((25, 30))
    Y = RNG.standard_normal((25, 1))
    a = reference_pls(X, Y, 5)
    b = reference_pls_nipals(X, Y, 5)
    assert np.abs(a.B - b.B).max() < 1e-8


def test_reference_ridge_limits():
    X = RNG.standard_normal((20, 10))
    Y = RNG.standard_normal((20, 1))
    large = reference_ridge(X, Y, 1e9)
    assert np.abs(large).max() < 1e-6
    b1 = reference_ridge(X, Y, 0.5)
    # residual check on the normal equations
    from opfold.pls_engine import center

    d = center(X, Y)
    resid = (d.Xc.T @ d.Xc + 0.5 * np.eye(10)) @ b1 - d.Xc.T @ d.Yc
    assert np.abs(resid).max() < 1e-10


def test_reference_ridge_hand_case():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([0.0, 1.0])
    beta = reference_ridge(X, y, 1.0)
    assert np.abs(beta.ravel() - np.array([-0.25, 0.25])).max() < 1e-12


def test_equivalence_suite_default_passes():
    report = equivalence_suite(seed=0, sizes=[(25, 30, 1), (40, 50, 2)])
    assert report.passed
    assert len(report.rows) == 4 * 2  # 4 check families x cells


def test_equivalence_suite_format():
    report = equivalence_suite(seed=1, sizes=[(20, 30, 1)])
    text = report.format_table()
    assert "pass" in text
    import io

    buf = io.StringIO()
    report.to_csv(buf)
    assert buf.getvalue().startswith("check,")


def test_plain_cv_pls_runs():
    X = RNG.standard_normal((30, 20))
    y = X @ RNG.standard_normal(20) * 0.2 + RNG.standard_normal(30) * 0.05
    plan = kfold_plan(30, 5, 0)
    fit, K, scores = plain_cv_pls(X, y, 8, plan)
    assert 1 <= K <= 8
    assert np.isfinite(scores[K - 1])
