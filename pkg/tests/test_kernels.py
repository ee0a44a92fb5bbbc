"""Backend parity: the compiled band kernels and the numpy fallback must
agree on every operator application."""

import numpy as np
import pytest

from opfold._kernels import BACKEND, bandops_np
from opfold import operators as ops

try:
    from opfold._kernels import bandops
except ImportError:
    bandops = None


def _band_of(op):
    return op._band.data, op._band.starts, op._band.lengths


@pytest.mark.skipif(bandops is None, reason="compiled extension not built")
@pytest.mark.parametrize("spec", [
    ops.identity(),
    ops.savgol_smooth(11, 2),
    ops.savgol_deriv(11, 2, 1),
    ops.savgol_deriv(21, 2, 2),
    ops.finite_diff_first(),
    ops.nw_gap_deriv(2, 5),
])
def test_backends_agree(spec):
    p = 48
    op = ops.build_operator(spec, p)
    data, starts, lengths = _band_of(op)
    rng = np.random.default_rng(0)
    M = rng.standard_normal((p, 3))
    X = rng.standard_normal((7, p))

    out_c = np.zeros((p, 3))
    out_n = np.zeros((p, 3))
    bandops.band_apply_left(data, starts, lengths, M, out_c)
    bandops_np.band_apply_left(data, starts, lengths, M, out_n)
    assert np.abs(out_c - out_n).max() < 1e-14

    out_c = np.zeros((7, p))
    out_n = np.zeros((7, p))
    bandops.band_apply_right(data, starts, lengths, X, out_c)
    bandops_np.band_apply_right(data, starts, lengths, X, out_n)
    assert np.abs(out_c - out_n).max() < 1e-14


def test_fallback_matches_dense():
    p = 32
    rng = np.random.default_rng(1)
    for spec in [ops.savgol_smooth(5, 2), ops.finite_diff_first()]:
        op = ops.build_operator(spec, p)
        A = ops.materialise(op)
        data, starts, lengths = _band_of(op)
        M = rng.standard_normal((p, 4))
        out = np.zeros((p, 4))
        bandops_np.band_apply_left(data, starts, lengths, M, out)
        assert np.abs(out - A @ M).max() < 1e-12
        X = rng.standard_normal((5, p))
        out = np.zeros((5, p))
        bandops_np.band_apply_right(data, starts, lengths, X, out)
        assert np.abs(out - X @ A.T).max() < 1e-12


def test_backend_selected():
    assert BACKEND in ("compiled", "numpy")
