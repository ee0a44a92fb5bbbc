import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opfold import operators as ops
from opfold.errors import ConfigError, DataError

RNG = np.random.default_rng(42)


# ---------------------------------------------------------------------------
# build_operator
# ---------------------------------------------------------------------------

def test_identity_materialises_to_eye():
    op = ops.build_operator(ops.identity(), 5)
    assert np.array_equal(ops.materialise(op), np.eye(5))


def test_savgol_smooth_reproduces_constant_row():
    op = ops.build_operator(ops.savgol_smooth(5, 2), 21)
    row = np.full(21, 3.0)
    out = ops.apply_rows(op, row[None, :])
    assert np.abs(out - 3.0).max() < 1e-12


def test_detrend_annihilates_ramp():
    op = ops.build_operator(ops.detrend(1), 16)
    ramp = 2.0 * np.arange(16) + 1.0
    assert np.abs(ops.apply_rows(op, ramp[None, :])).max() < 1e-12


def test_savgol_deriv_on_ramp_is_one():
    # oracle: dense least-squares SG matrix built by per-row polynomial
    # regression -- which is exactly how the band rows are constructed, so
    # we check against the hand value instead.
    op = ops.build_operator(ops.savgol_deriv(11, 2, 1), 64)
    out = ops.apply_rows(op, np.arange(64, dtype=float)[None, :])[0]
    assert np.abs(out[5:-5] - 1.0).max() < 1e-12


def test_invalid_windows_raise():
    with pytest.raises(ConfigError):
        ops.savgol_smooth(4, 2)  # even window
    with pytest.raises(ConfigError):
        ops.savgol_smooth(5, 5)  # order >= window
    with pytest.raises(ConfigError):
        ops.savgol_deriv(5, 2, 3)  # deriv not in {1, 2}
    with pytest.raises(ConfigError):
        ops.build_operator(ops.savgol_smooth(21, 2), 11)  # window > p
    with pytest.raises(ConfigError):
        ops.detrend(3)


# ---------------------------------------------------------------------------
# application routes vs dense oracle
# ---------------------------------------------------------------------------

BANK_SPECS = [
    ops.identity(),
    ops.savgol_smooth(11, 2),
    ops.savgol_smooth(21, 2),
    ops.savgol_deriv(11, 2, 1),
    ops.savgol_deriv(21, 2, 1),
    ops.savgol_deriv(11, 2, 2),
    ops.detrend(1),
    ops.detrend(2),
    ops.finite_diff_first(),
]


@pytest.mark.parametrize("spec", BANK_SPECS, ids=str)
def test_apply_routes_match_dense(spec):
    p = 40
    op = ops.build_operator(spec, p)
    A = ops.materialise(op)
    M = RNG.standard_normal((p, 5))
    X = RNG.standard_normal((7, p))
    assert np.abs(ops.apply_forward(op, M) - A @ M).max() < 1e-12
    assert np.abs(ops.apply_adjoint(op, M) - A.T @ M).max() < 1e-12
    assert np.abs(ops.apply_rows(op, X) - X @ A.T).max() < 1e-12


def test_apply_rows_identity_bit_identical():
    op = ops.build_operator(ops.identity(), 12)
    X = RNG.standard_normal((4, 12))
    assert np.array_equal(ops.apply_rows(op, X), X)


def test_finite_diff_first_row_convention():
    op = ops.build_operator(ops.finite_diff_first(), 3)
    assert np.array_equal(
        ops.materialise(op), np.array([[0, 0, 0], [-1, 1, 0], [0, -1, 1]], float)
    )
    out = ops.apply_rows(op, np.array([[1.0, 2.0, 4.0]]))
    assert np.array_equal(out, np.array([[0.0, 1.0, 2.0]]))


def test_forward_on_detrended_ramp_column():
    op = ops.build_operator(ops.detrend(1), 24)
    M = np.linspace(-3.0, 3.0, 24)[:, None]
    assert np.abs(ops.apply_forward(op, M)).max() < 1e-12


def test_adjoint_equals_forward_for_symmetric_projection():
    op = ops.build_operator(ops.detrend(2), 30)
    M = RNG.standard_normal((30, 4))
    assert np.abs(ops.apply_forward(op, M) - ops.apply_adjoint(op, M)).max() < 1e-12


def test_shape_mismatch_raises():
    op = ops.build_operator(ops.identity(), 8)
    with pytest.raises(DataError):
        ops.apply_forward(op, np.zeros((9, 2)))
    with pytest.raises(DataError):
        ops.apply_rows(op, np.zeros((2, 9)))


# ---------------------------------------------------------------------------
# compose
# ---------------------------------------------------------------------------

def test_compose_identity_pair_is_identity():
    p = 10
    ident = ops.build_operator(ops.identity(), p)
    c = ops.compose([ident, ident])
    v = RNG.standard_normal(p)
    assert np.abs(c.forward(v) - v).max() < 1e-15


def test_compose_detrend_idempotent():
    p = 20
    dt = ops.build_operator(ops.detrend(1), p)
    c = ops.compose([dt, dt])
    v = RNG.standard_normal(p)
    assert np.abs(c.forward(v) - dt.forward(v)).max() < 1e-12


def test_compose_matches_dense_product():
    p = 40
    a = ops.build_operator(ops.savgol_deriv(11, 2, 1), p)
    b = ops.build_operator(ops.savgol_smooth(11, 2), p)
    c = ops.compose([a, b])
    assert (
        np.abs(ops.materialise(c) - ops.materialise(a) @ ops.materialise(b)).max()
        < 1e-12
    )


def test_compose_rejects_mixed_channel_counts():
    a = ops.build_operator(ops.identity(), 8)
    b = ops.build_operator(ops.identity(), 9)
    with pytest.raises(ConfigError):
        ops.compose([a, b])


def test_compose_associativity():
    p = 32
    a, b, c = (
        ops.build_operator(s, p)
        for s in (ops.savgol_smooth(5, 2), ops.detrend(1), ops.finite_diff_first())
    )
    left = ops.compose([a, ops.compose([b, c])])
    flat = ops.compose([a, b, c])
    v = RNG.standard_normal(p)
    assert np.abs(left.forward(v) - flat.forward(v)).max() < 1e-12
    assert np.abs(left.adjoint(v) - flat.adjoint(v)).max() < 1e-12


def test_lincomb_matches_dense_sum():
    p = 24
    a = ops.build_operator(ops.savgol_smooth(5, 2), p)
    b = ops.build_operator(ops.detrend(1), p)
    mix = ops.lincomb([0.3, 0.7], [a, b])
    dense = 0.3 * ops.materialise(a) + 0.7 * ops.materialise(b)
    M = RNG.standard_normal((p, 3))
    assert np.abs(mix.forward(M) - dense @ M).max() < 1e-12
    assert np.abs(mix.adjoint(M) - dense.T @ M).max() < 1e-12


# ---------------------------------------------------------------------------
# compact bank
# ---------------------------------------------------------------------------

def test_compact_bank_has_nine_members():
    bank = ops.compact_bank(1023)
    assert len(bank.ops) == 9


def test_compact_bank_identity_first():
    bank = ops.compact_bank(1023)
    assert bank.ops[0].spec.kind == "identity"


def test_compact_bank_adjoints_match_dense():
    bank = ops.compact_bank(64)
    M = RNG.standard_normal((64, 2))
    for op in bank.ops:
        A = ops.materialise(op)
        assert np.abs(ops.apply_adjoint(op, M) - A.T @ M).max() < 1e-12


def test_compact_bank_small_p_downgrades_windows():
    bank = ops.compact_bank(15)
    assert any("reduced" in name for name in bank.names)
    assert bank.ops[0].spec.kind == "identity"


def test_compact_bank_tiny_p_shrinks():
    bank = ops.compact_bank(8)
    assert len(bank) < 9
    assert all("savgol" not in n for n in bank.names)


# ---------------------------------------------------------------------------
# materialise
# ---------------------------------------------------------------------------

def test_materialise_guard():
    op = ops.build_operator(ops.identity(), 5)
    op.p = 10000  # simulate an oversized operator
    with pytest.raises(ConfigError):
        ops.materialise(op)


def test_detrend_materialisation_symmetric_idempotent():
    A = ops.materialise(ops.build_operator(ops.detrend(1), 30))
    assert np.abs(A - A.T).max() < 1e-10
    assert np.abs(A @ A - A).max() < 1e-10


def test_detrend_annihilates_vandermonde():
    p, deg = 25, 2
    A = ops.materialise(ops.build_operator(ops.detrend(deg), p))
    V = np.vander(np.arange(p, dtype=float), deg + 1, increasing=True)
    assert np.abs(A @ V).max() < 1e-10


# ---------------------------------------------------------------------------
# invariants and properties
# ---------------------------------------------------------------------------

def test_sg_exactness_on_polynomials():
    p = 50
    x = np.arange(p, dtype=float)
    for order in (2, 3):
        sm = ops.build_operator(ops.savgol_smooth(11, order), p)
        for deg in range(order + 1):
            poly = x**deg
            assert np.abs(ops.apply_rows(sm, poly[None, :]) - poly).max() < 1e-8
    d1 = ops.build_operator(ops.savgol_deriv(11, 2, 1), p)
    out = ops.apply_rows(d1, x[None, :])[0]
    assert np.abs(out[5:-5] - 1.0).max() < 1e-10
    d2 = ops.build_operator(ops.savgol_deriv(11, 2, 2), p)
    out = ops.apply_rows(d2, (x**2)[None, :])[0]
    assert np.abs(out[5:-5] - 2.0).max() < 1e-9


def test_construction_is_deterministic():
    a = ops.build_operator(ops.savgol_deriv(11, 2, 1), 40)
    b = ops.build_operator(ops.savgol_deriv(11, 2, 1), 40)
    assert np.array_equal(ops.materialise(a), ops.materialise(b))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8), st.integers(0, 10_000))
def test_adjoint_consistency_property(bank_index, seed):
    p = 32
    bank = ops.compact_bank(p)
    op = bank.ops[bank_index]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(p)
    v = rng.standard_normal(p)
    lhs = ops.apply_rows(op, x[None, :])[0] @ v
    rhs = x @ ops.apply_adjoint(op, v)
    scale = max(abs(lhs), abs(rhs), 1.0)
    assert abs(lhs - rhs) / scale < 1e-10


def test_nw_gap_deriv_matches_hand_stencil():
    p = 20
    op = ops.build_operator(ops.nw_gap_deriv(2, 3), p)
    A = ops.materialise(op)
    x = RNG.standard_normal(p)
    i = 10
    left = x[i - 3 : i].mean()   # segment centred at i - gap
    right = x[i + 1 : i + 4].mean()  # segment centred at i + gap
    assert abs(A[i] @ x - (right - left) / 4.0) < 1e-12
    assert np.abs(A[0]).max() == 0.0  # out-of-reach rows stay zero


# ---------------------------------------------------------------------------
# spec string round-trips
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("text", [
    "identity",
    "finite_diff_first",
    "savgol_smooth(window=11,order=2)",
    "savgol_deriv(window=21,order=2,deriv=1)",
    "detrend(degree=2)",
    "nw_gap_deriv(gap=3,segment=5)",
    "compose(savgol_deriv(window=11,order=2,deriv=1),savgol_smooth(window=11,order=2))",
    "lincomb(0.25*identity,0.75*detrend(degree=1))",
])
def test_spec_round_trip(text):
    assert ops.format_spec(ops.parse_spec(text)) == text


def test_parse_rejects_garbage():
    for bad in ["savgol_smooth(window=11", "unknown_thing(a=1)", "identity(x=2)",
                "savgol_smooth(window=11,order=2)junk"]:
        with pytest.raises(ConfigError):
            ops.parse_spec(bad)
