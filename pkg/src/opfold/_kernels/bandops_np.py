"""Pure-numpy band-matrix kernels, semantics identical to bandops.pyx.

Both kernels accumulate coefficient positions in the same order (k = 0.. per
row) as the compiled versions, so the two backends agree to rounding noise.
"""

import numpy as np


def band_apply_left(data, starts, lengths, M, out):
    """out <- A @ M for row-banded A (out must be zero-initialised)."""
    p, width = data.shape
    pin = M.shape[0]
    for k in range(width):
        active = lengths > k
        if not active.any():
            break
        # Padded data is zero beyond each row's run, so clipped gathers on
        # inactive rows contribute nothing.
        idx = np.minimum(starts + k, pin - 1)
        out += data[:, k : k + 1] * M[idx, :]


def band_apply_right(data, starts, lengths, X, out):
    """out <- X @ A.T for row-banded A (out must be zero-initialised)."""
    p, width = data.shape
    pin = X.shape[1]
    for k in range(width):
        active = lengths > k
        if not active.any():
            break
        idx = np.minimum(starts + k, pin - 1)
        out += X[:, idx] * data[:, k]
