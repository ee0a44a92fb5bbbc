"""Strict linear wavelength operators.

Every operator here is a fixed p x p matrix determined by its spec and the
channel count alone: it does not depend on the response, the fold, the
sample, or any reference spectrum.  Operators are held in structured form
(a row-banded coefficient table plus an optional low-rank correction) and
are applied through band kernels; the dense matrix is only ever formed by
``materialise`` for test oracles.

Spec strings follow ``kind(param=value,...)`` and round-trip exactly through
``parse_spec`` / ``format_spec``, e.g. ``savgol_deriv(window=11,order=2,deriv=1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import band_apply_left, band_apply_right
from .errors import ConfigError, DataError

MATERIALISE_GUARD = 8192

_SIMPLE_KINDS = ("identity", "finite_diff_first")
_PARAM_KINDS = {
    "savgol_smooth": ("window", "order"),
    "savgol_deriv": ("window", "order", "deriv"),
    "detrend": ("degree",),
    "nw_gap_deriv": ("gap", "segment"),
}


# ---------------------------------------------------------------------------
# Operator specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorSpec:
    """Declarative description of a strict linear operator.

    ``kind`` is one of identity, savgol_smooth, savgol_deriv,
    finite_diff_first, detrend, nw_gap_deriv, compose or lincomb.  compose
    holds child specs applied right-to-left; lincomb is the weighted-sum
    combinator used for chain mixtures.
    """

    kind: str
    params: tuple = ()
    children: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        _validate_spec(self)

    def __str__(self) -> str:
        return format_spec(self)


def identity() -> OperatorSpec:
    return OperatorSpec("identity")


def savgol_smooth(window: int, order: int = 2) -> OperatorSpec:
    return OperatorSpec("savgol_smooth", (("window", window), ("order", order)))


def savgol_deriv(window: int, order: int = 2, deriv: int = 1) -> OperatorSpec:
    return OperatorSpec(
        "savgol_deriv", (("window", window), ("order", order), ("deriv", deriv))
    )


def finite_diff_first() -> OperatorSpec:
    return OperatorSpec("finite_diff_first")


def detrend(degree: int) -> OperatorSpec:
    return OperatorSpec("detrend", (("degree", degree),))


def nw_gap_deriv(gap: int, segment: int) -> OperatorSpec:
    return OperatorSpec("nw_gap_deriv", (("gap", gap), ("segment", segment)))


def compose_spec(children) -> OperatorSpec:
    return OperatorSpec("compose", children=tuple(children))


def lincomb_spec(weights, children) -> OperatorSpec:
    return OperatorSpec(
        "lincomb", children=tuple(children), weights=tuple(float(w) for w in weights)
    )


def _validate_spec(spec: OperatorSpec) -> None:
    kind = spec.kind
    p = dict(spec.params)
    if kind in _SIMPLE_KINDS:
        if spec.params or spec.children:
            raise ConfigError(f"{kind} takes no parameters")
    elif kind == "savgol_smooth" or kind == "savgol_deriv":
        w, o = p.get("window"), p.get("order")
        if w is None or w < 3 or w % 2 == 0:
            raise ConfigError(f"{kind}: window must be an odd integer >= 3, got {w}")
        if o is None or o < 0:
            raise ConfigError(f"{kind}: order must be a non-negative integer, got {o}")
        if o >= w:
            raise ConfigError(f"{kind}: order must be < window ({o} >= {w})")
        if kind == "savgol_deriv":
            d = p.get("deriv")
            if d not in (1, 2):
                raise ConfigError(f"savgol_deriv: deriv must be 1 or 2, got {d}")
            if d > o:
                raise ConfigError(f"savgol_deriv: deriv {d} exceeds order {o}")
    elif kind == "detrend":
        if p.get("degree") not in (1, 2):
            raise ConfigError(f"detrend: degree must be 1 or 2, got {p.get('degree')}")
    elif kind == "nw_gap_deriv":
        g, seg = p.get("gap"), p.get("segment")
        if g is None or g < 1:
            raise ConfigError(f"nw_gap_deriv: gap must be >= 1, got {g}")
        if seg is None or seg < 1 or seg % 2 == 0:
            raise ConfigError(f"nw_gap_deriv: segment must be an odd integer >= 1, got {seg}")
    elif kind == "compose":
        if not spec.children:
            raise ConfigError("compose needs at least one child spec")
    elif kind == "lincomb":
        if not spec.children or len(spec.children) != len(spec.weights):
            raise ConfigError("lincomb needs matching weights and child specs")
    else:
        raise ConfigError(f"unknown operator kind {kind!r}")


def format_spec(spec: OperatorSpec) -> str:
    if spec.kind in _SIMPLE_KINDS:
        return spec.kind
    if spec.kind == "compose":
        return "compose(" + ",".join(format_spec(c) for c in spec.children) + ")"
    if spec.kind == "lincomb":
        terms = [f"{w!r}*{format_spec(c)}" for w, c in zip(spec.weights, spec.children)]
        return "lincomb(" + ",".join(terms) + ")"
    args = ",".join(f"{k}={v}" for k, v in spec.params)
    return f"{spec.kind}({args})"


def parse_spec(text: str) -> OperatorSpec:
    """Parse the textual operator form used in model files and CLI flags."""
    spec, pos = _parse_one(text, 0)
    if pos != len(text):
        raise ConfigError(f"trailing characters in operator spec: {text[pos:]!r}")
    return spec


def _parse_one(text: str, pos: int):
    start = pos
    while pos < len(text) and (text[pos].isalnum() or text[pos] == "_"):
        pos += 1
    name = text[start:pos]
    if not name:
        raise ConfigError(f"expected operator name at position {start} in {text!r}")
    if pos == len(text) or text[pos] != "(":
        if name in _SIMPLE_KINDS:
            return OperatorSpec(name), pos
        raise ConfigError(f"operator {name!r} requires parameters")
    pos += 1  # consume "("
    if name in _SIMPLE_KINDS:
        raise ConfigError(f"{name} takes no parameters")
    if name == "compose":
        children = []
        while True:
            child, pos = _parse_one(text, pos)
            children.append(child)
            if pos < len(text) and text[pos] == ",":
                pos += 1
                continue
            break
        pos = _expect(text, pos, ")")
        return compose_spec(children), pos
    if name == "lincomb":
        weights, children = [], []
        while True:
            star = text.find("*", pos)
            if star < 0:
                raise ConfigError("lincomb term must be weight*spec")
            weights.append(float(text[pos:star]))
            child, pos = _parse_one(text, star + 1)
            children.append(child)
            if pos < len(text) and text[pos] == ",":
                pos += 1
                continue
            break
        pos = _expect(text, pos, ")")
        return lincomb_spec(weights, children), pos
    if name not in _PARAM_KINDS:
        raise ConfigError(f"unknown operator kind {name!r}")
    params = []
    while True:
        eq = text.find("=", pos)
        if eq < 0:
            raise ConfigError(f"expected key=value in {name} parameters")
        key = text[pos:eq]
        pos = eq + 1
        end = pos
        while end < len(text) and text[end] not in ",)":
            end += 1
        params.append((key, int(text[pos:end])))
        pos = end
        if pos < len(text) and text[pos] == ",":
            pos += 1
            continue
        break
    pos = _expect(text, pos, ")")
    order = _PARAM_KINDS[name]
    got = dict(params)
    if tuple(got) != order:
        params = tuple((k, got[k]) for k in order if k in got)
    return OperatorSpec(name, tuple(params)), pos


def _expect(text, pos, ch):
    if pos >= len(text) or text[pos] != ch:
        raise ConfigError(f"expected {ch!r} at position {pos} in {text!r}")
    return pos + 1


# ---------------------------------------------------------------------------
# LinOp
# ---------------------------------------------------------------------------

def _freeze(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class _Band:
    """Row-banded coefficient table: row i runs data[i, :lengths[i]] from
    column starts[i]."""

    __slots__ = ("starts", "lengths", "data")

    def __init__(self, starts, lengths, data):
        self.starts = _freeze(np.asarray(starts, dtype=np.int64))
        self.lengths = _freeze(np.asarray(lengths, dtype=np.int64))
        self.data = _freeze(np.asarray(data, dtype=np.float64))

    def apply_left(self, M):
        out = np.zeros((self.data.shape[0], M.shape[1]))
        band_apply_left(self.data, self.starts, self.lengths, M, out)
        return out

    def apply_right(self, X):
        out = np.zeros((X.shape[0], self.data.shape[0]))
        band_apply_right(self.data, self.starts, self.lengths, X, out)
        return out

    def transpose(self, p):
        rows = np.repeat(np.arange(p, dtype=np.int64), self.lengths)
        cols = np.concatenate(
            [
                np.arange(s, s + ln, dtype=np.int64)
                for s, ln in zip(self.starts, self.lengths)
            ]
        ) if rows.size else np.empty(0, dtype=np.int64)
        mask = np.arange(self.data.shape[1]) < self.lengths[:, None]
        vals = self.data[mask]
        t_starts = np.full(p, p, dtype=np.int64)
        t_ends = np.zeros(p, dtype=np.int64)
        if cols.size:
            np.minimum.at(t_starts, cols, rows)
            np.maximum.at(t_ends, cols, rows + 1)
        empty = t_ends == 0
        t_starts[empty] = 0
        t_lengths = t_ends - t_starts
        t_lengths[empty] = 0
        width = int(t_lengths.max()) if p else 0
        t_data = np.zeros((p, max(width, 1)))
        if cols.size:
            t_data[cols, rows - t_starts[cols]] = vals
        return _Band(t_starts, t_lengths, t_data)


class LinOp:
    """A strict linear operator bound to a channel count.

    Structured representations: a band table with optional low-rank
    correction (materialisation = band - V @ M), a lazy composition chain,
    or a weighted sum.  Instances are immutable and safe to share.
    """

    __slots__ = ("p", "spec", "_band", "_band_t", "_lowrank", "_children", "_weights")

    def __init__(self, p, spec, band=None, lowrank=None, children=None, weights=None):
        self.p = int(p)
        self.spec = spec
        self._band = band
        self._band_t = band.transpose(self.p) if band is not None else None
        if lowrank is not None:
            lowrank = (_freeze(lowrank[0]), _freeze(lowrank[1]))
        self._lowrank = lowrank
        self._children = tuple(children) if children else None
        self._weights = _freeze(np.asarray(weights, float)) if weights is not None else None

    @property
    def name(self) -> str:
        return format_spec(self.spec)

    def forward(self, M: np.ndarray) -> np.ndarray:
        """A @ M without materialising A."""
        if np.ndim(M) == 1:
            return self.forward(np.asarray(M, float)[:, None])[:, 0]
        M = _as_matrix(M, self.p, axis=0)
        if self._children is not None:
            if self._weights is not None:
                out = self._weights[0] * self._children[0].forward(M)
                for w, child in zip(self._weights[1:], self._children[1:]):
                    out += w * child.forward(M)
                return out
            out = M
            for child in reversed(self._children):
                out = child.forward(out)
            return out
        out = self._band.apply_left(M)
        if self._lowrank is not None:
            V, W = self._lowrank
            out -= V @ (W @ M)
        return out

    def adjoint(self, M: np.ndarray) -> np.ndarray:
        """A.T @ M without materialising A."""
        if np.ndim(M) == 1:
            return self.adjoint(np.asarray(M, float)[:, None])[:, 0]
        M = _as_matrix(M, self.p, axis=0)
        if self._children is not None:
            if self._weights is not None:
                out = self._weights[0] * self._children[0].adjoint(M)
                for w, child in zip(self._weights[1:], self._children[1:]):
                    out += w * child.adjoint(M)
                return out
            out = M
            for child in self._children:
                out = child.adjoint(out)
            return out
        out = self._band_t.apply_left(M)
        if self._lowrank is not None:
            V, W = self._lowrank
            out -= W.T @ (V.T @ M)
        return out

    def rows(self, X: np.ndarray) -> np.ndarray:
        """X @ A.T: apply to sample-major spectra."""
        if np.ndim(X) == 1:
            return self.rows(np.asarray(X, float)[None, :])[0]
        X = _as_matrix(X, self.p, axis=1)
        if self._children is not None:
            if self._weights is not None:
                out = self._weights[0] * self._children[0].rows(X)
                for w, child in zip(self._weights[1:], self._children[1:]):
                    out += w * child.rows(X)
                return out
            out = X
            for child in reversed(self._children):
                out = child.rows(out)
            return out
        out = self._band.apply_right(X)
        if self._lowrank is not None:
            V, W = self._lowrank
            out -= (X @ W.T) @ V.T
        return out


def _as_matrix(M, p, axis):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[axis] != p:
        raise DataError(
            f"operand has shape {M.shape}, expected size {p} along axis {axis}"
        )
    return np.ascontiguousarray(M)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_operator(spec: OperatorSpec, p: int) -> LinOp:
    """Bind a spec to a channel count, producing the fixed operator.

    Construction is deterministic: the same (spec, p) always yields
    bit-identical coefficients.
    """
    if p < 1:
        raise ConfigError(f"channel count must be positive, got {p}")
    kind = spec.kind
    params = dict(spec.params)
    if kind == "identity":
        band = _Band(np.arange(p), np.ones(p, np.int64), np.ones((p, 1)))
        return LinOp(p, spec, band=band)
    if kind == "savgol_smooth":
        return LinOp(p, spec, band=_savgol_band(p, params["window"], params["order"], 0))
    if kind == "savgol_deriv":
        return LinOp(
            p,
            spec,
            band=_savgol_band(p, params["window"], params["order"], params["deriv"]),
        )
    if kind == "finite_diff_first":
        if p < 2:
            raise ConfigError("finite_diff_first needs at least 2 channels")
        starts = np.maximum(np.arange(p) - 1, 0)
        lengths = np.where(np.arange(p) == 0, 0, 2).astype(np.int64)
        data = np.zeros((p, 2))
        data[1:, 0] = -1.0
        data[1:, 1] = 1.0
        return LinOp(p, spec, band=_Band(starts, lengths, data))
    if kind == "detrend":
        return LinOp(p, spec, band=_identity_band(p), lowrank=_detrend_lowrank(p, params["degree"]))
    if kind == "nw_gap_deriv":
        return LinOp(p, spec, band=_nw_band(p, params["gap"], params["segment"]))
    if kind == "compose":
        return compose([build_operator(c, p) for c in spec.children])
    if kind == "lincomb":
        children = [build_operator(c, p) for c in spec.children]
        return LinOp(p, spec, children=children, weights=spec.weights)
    raise ConfigError(f"unknown operator kind {kind!r}")


def _identity_band(p):
    return _Band(np.arange(p), np.ones(p, np.int64), np.ones((p, 1)))


def _savgol_band(p, window, order, deriv):
    if p < window:
        raise ConfigError(f"window {window} exceeds channel count {p}")
    h = window // 2
    # Truncated one-sided windows at the edges keep the matrix fixed while
    # reproducing polynomials exactly on every channel.
    starts = np.maximum(np.arange(p) - h, 0)
    ends = np.minimum(np.arange(p) + h + 1, p)
    lengths = ends - starts
    width = int(lengths.max())
    data = np.zeros((p, width))
    cache: dict = {}
    for i in range(p):
        lo, hi = starts[i], ends[i]
        key = (i - lo, hi - i)
        row = cache.get(key)
        if row is None:
            t = np.arange(lo, hi, dtype=np.float64) - i
            V = np.vander(t, order + 1, increasing=True)
            # Row `deriv` of the pseudoinverse gives the fitted polynomial's
            # deriv-th coefficient; scale by deriv! for the derivative value.
            row = np.linalg.pinv(V)[deriv] * math.factorial(deriv)
            cache[key] = row
        data[i, : hi - lo] = row
    return _Band(starts, lengths.astype(np.int64), data)


def _detrend_lowrank(p, degree):
    t = (np.arange(p, dtype=np.float64) - (p - 1) / 2.0)
    scale = max(t[-1], 1.0)
    V = np.vander(t / scale, degree + 1, increasing=True)
    Q, _ = np.linalg.qr(V)
    return Q, Q.T.copy()


def _nw_band(p, gap, segment):
    half = segment // 2
    reach = gap + half
    if p < 2 * reach + 1:
        raise ConfigError(
            f"nw_gap_deriv(gap={gap},segment={segment}) needs at least {2 * reach + 1} channels"
        )
    width = 2 * reach + 1
    stencil = np.zeros(width)
    stencil[: segment] -= 1.0  # left segment, centred at -gap
    stencil[width - segment :] += 1.0  # right segment, centred at +gap
    stencil /= 2.0 * gap * segment
    starts = np.arange(p, dtype=np.int64) - reach
    lengths = np.full(p, width, dtype=np.int64)
    data = np.tile(stencil, (p, 1))
    # Rows whose stencil would leave the grid are zero: the matrix stays fixed.
    bad = (starts < 0) | (starts + width > p)
    lengths[bad] = 0
    starts[bad] = 0
    data[bad] = 0.0
    return _Band(starts, lengths, data)


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def apply_forward(op: LinOp, M: np.ndarray) -> np.ndarray:
    """A @ M (columns of M transformed)."""
    return op.forward(M)


def apply_adjoint(op: LinOp, M: np.ndarray) -> np.ndarray:
    """A.T @ M."""
    return op.adjoint(M)


def apply_rows(op: LinOp, X: np.ndarray) -> np.ndarray:
    """X @ A.T (each row spectrum transformed)."""
    return op.rows(X)


def compose(ops) -> LinOp:
    """Compose operators applied right-to-left (last element acts first)."""
    ops = list(ops)
    if not ops:
        raise ConfigError("compose needs at least one operator")
    p = ops[0].p
    for op in ops:
        if op.p != p:
            raise ConfigError(f"mixed channel counts in compose: {op.p} != {p}")
    if len(ops) == 1:
        return ops[0]
    spec = compose_spec([op.spec for op in ops])
    return LinOp(p, spec, children=ops)


def lincomb(weights, ops) -> LinOp:
    """Weighted sum of operators (used for chain mixtures)."""
    ops = list(ops)
    weights = [float(w) for w in weights]
    if not ops or len(ops) != len(weights):
        raise ConfigError("lincomb needs matching weights and operators")
    p = ops[0].p
    for op in ops:
        if op.p != p:
            raise ConfigError("mixed channel counts in lincomb")
    spec = lincomb_spec(weights, [op.spec for op in ops])
    return LinOp(p, spec, children=ops, weights=weights)


def materialise(op: LinOp) -> np.ndarray:
    """Dense p x p form; test-oracle support only (guarded at p <= 8192)."""
    if op.p > MATERIALISE_GUARD:
        raise ConfigError(
            f"refusing to materialise {op.p} x {op.p} operator (guard {MATERIALISE_GUARD})"
        )
    return op.forward(np.eye(op.p))


# ---------------------------------------------------------------------------
# Compact bank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorBank:
    """Ordered operator collection; index 0 is always the identity."""

    ops: tuple
    names: tuple

    def __post_init__(self):
        if not self.ops or self.ops[0].spec.kind != "identity":
            raise ConfigError("operator bank must start with the identity")
        if len(self.ops) != len(self.names):
            raise ConfigError("bank ops and names differ in length")

    def __len__(self):
        return len(self.ops)

    @property
    def p(self):
        return self.ops[0].p


def _shrink_window(window, p):
    w = min(window, p)
    if w % 2 == 0:
        w -= 1
    return w


def compact_bank(p: int) -> OperatorBank:
    """The nine-operator screening bank.

    Identity; Savitzky-Golay smoothing (windows 11 and 21); SG first
    derivatives (windows 11 and 21); SG second derivative (window 11);
    detrend degrees 1 and 2; first finite difference.  Polynomial order is 2
    throughout.  Below p = 21 windows shrink to the largest odd value <= p
    (recorded in the name); below p = 11 the affected operators are dropped
    and the bank shrinks.
    """
    wanted = [
        identity(),
        savgol_smooth(11, 2),
        savgol_smooth(21, 2),
        savgol_deriv(11, 2, 1),
        savgol_deriv(21, 2, 1),
        savgol_deriv(11, 2, 2),
        detrend(1),
        detrend(2),
        finite_diff_first(),
    ]
    ops, names, seen = [], [], set()
    for spec in wanted:
        note = ""
        if spec.kind in ("savgol_smooth", "savgol_deriv"):
            if p < 11:
                continue  # too few channels: drop the windowed operators
            window = dict(spec.params)["window"]
            if p < window:
                w = _shrink_window(window, p)
                repl = dict(spec.params)
                repl["window"] = w
                spec = OperatorSpec(spec.kind, tuple(repl.items()))
                note = f" [window reduced from {window}]"
        if spec.kind == "detrend" and p <= dict(spec.params)["degree"]:
            continue
        if spec.kind == "finite_diff_first" and p < 2:
            continue
        key = format_spec(spec)
        if key in seen:
            continue
        seen.add(key)
        ops.append(build_operator(spec, p))
        names.append(key + note)
    return OperatorBank(tuple(ops), tuple(names))


def bank_from_specs(specs, p: int) -> OperatorBank:
    """Build a bank from parsed specs; prepends the identity if missing."""
    specs = list(specs)
    if not specs or specs[0].kind != "identity":
        specs = [identity()] + specs
    ops = tuple(build_operator(s, p) for s in specs)
    return OperatorBank(ops, tuple(format_spec(s) for s in specs))
