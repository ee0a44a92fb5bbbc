"""Synthetic spectra generators for benchmarks and acceptance checks.

``planted_derivative`` builds regression tasks whose response is a noisy
linear functional of each row's first derivative, so derivative-family
operators genuinely help; ``planted_chain`` plants a two-step operator
chain with narrow spectral features that keep the chain's output alive.
"""

from __future__ import annotations

import numpy as np

from .fastaom import chain_operator
from .operators import OperatorBank, apply_rows, compact_bank

PLANTED_CHAIN = (4, 5)  # first-derivative window 21 after second-derivative window 11


def smooth_spectra(rng, n, p, noise_amp=2.0, noise_len=15.0):
    """Sum of up to 5 Gaussian bumps per row plus correlated noise.

    The noise is white noise dragged through a wide kernel: a baseline-like
    nuisance with amplitude ``noise_amp`` times the bump signal's spread,
    which derivative operators suppress and the identity must model.
    """
    grid = np.arange(p, dtype=np.float64)
    X = np.zeros((n, p))
    for i in range(n):
        for _ in range(rng.integers(1, 6)):
            c = rng.uniform(0.1 * p, 0.9 * p)
            wd = rng.uniform(p / 40.0, p / 10.0)
            X[i] += rng.uniform(0.5, 2.0) * np.exp(-((grid - c) ** 2) / (2 * wd**2))
    if noise_amp > 0:
        sig_std = X.std()
        m = int(3 * noise_len)
        k = np.exp(-0.5 * (np.arange(-m, m + 1) / noise_len) ** 2)
        k /= np.linalg.norm(k)
        rough = rng.standard_normal((n, p + 2 * m))
        corr = np.stack([np.convolve(r, k, mode="valid") for r in rough])
        X += noise_amp * sig_std * corr / corr.std()
    return X


def planted_derivative(n: int, p: int, seed: int, snr: float = 10.0):
    """Regression rows whose response is a weighted first derivative.

    y_i = <gradient(x_i), w> + noise at the requested signal-to-noise
    ratio; w is a lightly smoothed random weight vector.
    """
    rng = np.random.default_rng(seed)
    X = smooth_spectra(rng, n, p)
    k = np.exp(-0.5 * (np.arange(-8, 9) / 1.0) ** 2)
    k /= k.sum()
    w = np.convolve(rng.standard_normal(p), k, mode="same")
    w /= np.linalg.norm(w)
    D = np.gradient(X, axis=1)
    y0 = D @ w
    y = y0 + rng.standard_normal(n) * (np.std(y0) / snr)
    return X, y


def planted_derivative_classes(n: int, p: int, seed: int,
                               feature_amp: float = 0.3):
    """Two classes separated by a narrow doublet feature under heavy
    baseline nuisance: sharp in derivative space, buried in raw space."""
    rng = np.random.default_rng(seed)
    grid = np.arange(p, dtype=np.float64)
    X = smooth_spectra(rng, n, p, noise_amp=0.0)
    sig_std = X.std()
    labels = (rng.random(n) < 0.5).astype(int)
    c0, wd = 0.4 * p, p / 60.0
    feat = np.exp(-((grid - c0) ** 2) / (2 * wd**2)) - np.exp(
        -((grid - c0 - 2 * wd) ** 2) / (2 * wd**2)
    )
    X += feature_amp * sig_std * labels[:, None] * feat
    noise_len = 15.0
    m = int(3 * noise_len)
    kb = np.exp(-0.5 * (np.arange(-m, m + 1) / noise_len) ** 2)
    kb /= np.linalg.norm(kb)
    rough = rng.standard_normal((n, p + 2 * m))
    corr = np.stack([np.convolve(r, kb, mode="valid") for r in rough])
    X += 2.0 * sig_std * corr / corr.std()
    return X, labels


def planted_chain(n: int, p: int, seed: int, snr: float = 10.0,
                  noise: float = 0.2, bank: OperatorBank | None = None,
                  chain: tuple = PLANTED_CHAIN):
    """Rows with one guaranteed narrow feature plus broad bumps and white
    channel noise; the response reads the planted chain's output.

    The narrow feature keeps the double-derivative chain's signal alive,
    the white noise penalises chains that skip smoothing, and the broad
    bumps penalise chains that skip differentiation.
    """
    rng = np.random.default_rng(seed)
    grid = np.arange(p, dtype=np.float64)
    X = np.zeros((n, p))
    for i in range(n):
        c = rng.uniform(0.15 * p, 0.85 * p)
        wd = rng.uniform(p / 50.0, p / 25.0)
        X[i] += rng.uniform(1.0, 2.5) * np.exp(-((grid - c) ** 2) / (2 * wd**2))
        for _ in range(rng.integers(1, 5)):
            c = rng.uniform(0.1 * p, 0.9 * p)
            wd = rng.uniform(p / 20.0, p / 6.0)
            X[i] += rng.uniform(0.5, 2.5) * np.exp(-((grid - c) ** 2) / (2 * wd**2))
    X += noise * rng.standard_normal((n, p))
    if bank is None:
        bank = compact_bank(p)
    w = rng.standard_normal(p)
    y0 = apply_rows(chain_operator(bank, chain), X) @ w
    y = y0 + rng.standard_normal(n) * (np.std(y0) / snr)
    return X, y, chain


def write_csv_dataset(path_x, path_y, X, y, wavelengths=None):
    """Write spectra/response CSVs in the layout the CLI ingests."""
    X = np.asarray(X)
    y = np.asarray(y)
    if wavelengths is None:
        wavelengths = np.arange(X.shape[1])
    with open(path_x, "w") as fh:
        fh.write(",".join(str(w) for w in wavelengths) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(path_y, "w") as fh:
        fh.write("y\n" if y.ndim == 1 else ",".join(f"y{i}" for i in range(y.shape[1])) + "\n")
        for v in np.atleast_2d(y.T).T:
            row = np.atleast_1d(v)
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
