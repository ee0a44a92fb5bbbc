"""Fold plans, deterministic splits, metrics and paired-benchmark statistics.

Also houses the two selection-theory diagnostics: the winner's-curse bias
magnitude for a B-candidate comparison and the simplex vertex-optimum check
for the covariance objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .errors import ConfigError, DataError
from .operators import OperatorBank


@dataclass
class FoldPlan:
    """Disjoint (train, validation) index pairs covering 0..n-1."""

    folds: list
    seed: int
    stratified: bool = False


def kfold_plan(n: int, k: int, seed: int, labels=None) -> FoldPlan:
    """Seeded shuffle then contiguous blocks; stratified when labels given.

    Stratified plans keep class proportions within one sample per fold and
    fail loudly when a class has fewer members than folds.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    if labels is None:
        perm = rng.permutation(n)
        blocks = np.array_split(perm, k)
    else:
        labels = np.asarray(labels)
        if labels.shape[0] != n:
            raise DataError("labels length does not match sample count")
        blocks = [[] for _ in range(k)]
        offset = 0
        for cls in np.unique(labels):
            idx = np.flatnonzero(labels == cls)
            if idx.size < k:
                raise ConfigError(
                    f"class {cls!r} has {idx.size} members, fewer than {k} folds"
                )
            idx = rng.permutation(idx)
            # Rotate the starting fold per class so fold sizes stay balanced.
            for j, chunk in enumerate(np.array_split(idx, k)):
                blocks[(j + offset) % k].extend(chunk.tolist())
            offset += 1
        blocks = [np.asarray(sorted(b), dtype=np.int64) for b in blocks]
    folds = []
    for i in range(k):
        va = np.asarray(blocks[i], dtype=np.int64)
        tr = np.concatenate([blocks[j] for j in range(k) if j != i]).astype(np.int64)
        folds.append((np.sort(tr), np.sort(va)))
    return FoldPlan(folds, seed, stratified=labels is not None)


def spxy_split(X, y, test_fraction: float):
    """Deterministic SPXY partition into (train, test) index arrays.

    Joint distance d = d_X/max(d_X) + d_y/max(d_y) with Euclidean blocks;
    the two most distant samples seed the training set, then samples join
    greedily by maximising their minimum distance to the chosen set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n = X.shape[0]
    if n < 3:
        raise DataError("SPXY needs at least 3 samples")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")
    n_test = max(1, int(round(test_fraction * n)))
    n_train = n - n_test
    if n_train < 2:
        n_train = 2
        n_test = n - 2
    dx = cdist(X, X)
    dy = cdist(y, y)
    mx, my = dx.max(), dy.max()
    if mx == 0.0 and my == 0.0:
        warnings.warn("all pairwise distances are zero; falling back to index order")
        idx = np.arange(n)
        return idx[:n_train], idx[n_train:]
    d = (dx / mx if mx > 0 else dx) + (dy / my if my > 0 else dy)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    chosen = [int(i), int(j)]
    mind = np.minimum(d[i], d[j])
    mind[chosen] = -np.inf
    while len(chosen) < n_train:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, d[nxt])
        mind[nxt] = -np.inf
    train = np.asarray(sorted(chosen), dtype=np.int64)
    test = np.setdiff1d(np.arange(n), train)
    return train, test


def rmsep(yhat, y) -> float:
    """Root-mean-square prediction error."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.size == 0 or yhat.shape != y.shape and yhat.ravel().shape != y.ravel().shape:
        raise DataError("rmsep needs equal-length non-empty inputs")
    return float(np.sqrt(np.mean((yhat.ravel() - y.ravel()) ** 2)))


def balanced_accuracy(pred, truth) -> float:
    """Mean per-class recall over the classes observed in truth."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or truth.size == 0:
        raise DataError("balanced_accuracy needs equal-length non-empty inputs")
    classes = np.unique(truth)
    extra = np.setdiff1d(np.unique(pred), classes)
    if extra.size:
        raise DataError(f"predicted class {extra[0]!r} never observed in truth")
    recalls = [np.mean(pred[truth == c] == c) for c in classes]
    return float(np.mean(recalls))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank (one-sided) and Holm
# ---------------------------------------------------------------------------

def wilcoxon_one_sided(diffs, max_exact: int = 25) -> float:
    """P(differences < 0): one-sided signed-rank p-value.

    Zero differences are dropped; |d| ties take midranks.  The exact null
    distribution (sign-assignment enumeration via dynamic programming over
    doubled ranks) is used up to ``max_exact`` effective samples, a normal
    approximation with tie and continuity corrections above.
    """
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 1.0
    order = np.argsort(np.abs(d), kind="stable")
    ranks = np.empty(n)
    absd = np.abs(d)[order]
    # midranks
    i = 0
    pos = 1
    while i < n:
        j = i
        while j + 1 < n and absd[j + 1] == absd[i]:
            j += 1
        ranks[order[i : j + 1]] = (pos + (pos + (j - i))) / 2.0
        pos += j - i + 1
        i = j + 1
    # Small positive-rank sum is evidence for "differences < 0".
    w_plus = ranks[d > 0].sum()
    if n <= max_exact:
        # Exact: distribution of the rank sum over all 2^n sign assignments;
        # doubled ranks keep midranks integral.
        r2 = np.rint(2.0 * ranks).astype(np.int64)
        total = int(r2.sum())
        dist = np.zeros(total + 1)
        dist[0] = 1.0
        for r in r2:
            nxt = dist.copy()
            nxt[r:] += dist[: total + 1 - r]
            dist = nxt
        dist /= dist.sum()
        w2 = int(np.rint(2.0 * w_plus))
        return float(dist[: w2 + 1].sum())
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_term = (counts**3 - counts).sum() / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return 1.0
    z = (w_plus - mean + 0.5) / np.sqrt(var)
    return float(norm.cdf(z))


def holm_adjust(pvalues) -> np.ndarray:
    """Holm step-down adjustment within one declared family."""
    p = np.asarray(pvalues, dtype=np.float64)
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p[idx])
        adj[idx] = min(1.0, running)
    return adj


@dataclass
class PairedSummary:
    """Paired-benchmark statistics on per-dataset metric ratios a_i / b_i."""

    n: int
    median_ratio: float
    wins: int
    ci_lo: float
    ci_hi: float
    p_one_sided: float
    p_holm: float | None = None


def paired_summary(a, b, bootstrap_n: int = 10000, seed: int = 0) -> PairedSummary:
    """Ratios r = a/b (below one favours a), their median, win count, a
    seeded percentile-bootstrap CI on the median, and a one-sided Wilcoxon
    signed-rank test on log-ratios.  Holm adjustment is applied separately
    across a declared family via ``holm_adjust``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise DataError("paired_summary needs equal-length 1-D metric lists")
    if (b <= 0).any() or (a <= 0).any():
        raise DataError("ratio mode needs strictly positive metrics")
    r = a / b
    med = float(np.median(r))
    wins = int((r < 1.0).sum())
    rng = np.random.default_rng(seed)
    n = r.size
    boots = np.median(r[rng.integers(0, n, size=(bootstrap_n, n))], axis=1)
    ci_lo = float(np.percentile(boots, 2.5))
    ci_hi = float(np.percentile(boots, 97.5))
    ci_lo, ci_hi = min(ci_lo, med), max(ci_hi, med)
    p = wilcoxon_one_sided(np.log(r))
    return PairedSummary(n, med, wins, ci_lo, ci_hi, p)


# ---------------------------------------------------------------------------
# Selection-theory diagnostics
# ---------------------------------------------------------------------------

def winner_bias(B: int, sigma: float, n_holdout: int) -> float:
    """Leading extreme-value term of the optimistic selection bias when the
    minimum of B noisy validation scores is crowned:
    sigma/sqrt(n_holdout) * sqrt(2 ln B)."""
    if B < 2:
        raise ConfigError("winner_bias needs at least 2 candidates")
    if sigma <= 0 or n_holdout < 1:
        raise ConfigError("winner_bias needs sigma > 0 and n_holdout >= 1")
    return float(sigma / np.sqrt(n_holdout) * np.sqrt(2.0 * np.log(B)))


@dataclass
class VertexReport:
    vertex_max: float
    best_interior: float
    holds: bool


def vertex_check_gram(G: np.ndarray, sample_count: int, seed: int) -> VertexReport:
    """Check that alpha^T G alpha over the simplex peaks at a vertex: no
    sampled interior point may beat the best vertex by more than 1e-9."""
    G = np.asarray(G, dtype=np.float64)
    B = G.shape[0]
    vertex_max = float(np.max(np.diag(G)))
    rng = np.random.default_rng(seed)
    alphas = rng.dirichlet(np.ones(B), size=sample_count)
    vals = np.einsum("ij,jk,ik->i", alphas, G, alphas)
    best_interior = float(vals.max()) if sample_count else -np.inf
    return VertexReport(vertex_max, best_interior, vertex_max >= best_interior - 1e-9)


def vertex_check(bank: OperatorBank, S: np.ndarray, sample_count: int,
                 seed: int) -> VertexReport:
    """Vertex-optimum check on the bank-built Gram matrix
    G_bc = <A_b S, A_c S>_F (operators applied in structured form)."""
    mats = [op.forward(np.asarray(S, dtype=np.float64)) for op in bank.ops]
    B = len(mats)
    G = np.empty((B, B))
    for i in range(B):
        for j in range(i, B):
            G[i, j] = G[j, i] = float(np.sum(mats[i] * mats[j]))
    return vertex_check_gram(G, sample_count, seed)
