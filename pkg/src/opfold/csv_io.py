"""CSV ingestion for spectra and responses.

Spectra files carry the wavelength header in the first row and one sample
per line; an optional leading ``id`` column names samples.  Responses live
in a separate CSV aligned by row order or by id.  Ragged rows, non-numeric
cells and non-finite values are rejected with row/column coordinates.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import DataError


def _parse_matrix(rows, path, offset):
    try:
        return np.asarray(rows, dtype=np.float64)
    except (ValueError, TypeError):
        for ri, row in enumerate(rows):
            for ci, cell in enumerate(row):
                try:
                    float(cell)
                except (ValueError, TypeError):
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row "
                        f"{ri + offset}, column {ci}"
                    ) from None
        raise DataError(f"{path}: malformed numeric block")


def load_csv(path: str):
    """Load a spectra CSV: (matrix, wavelength header, ids or None)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one sample")
    header = rows[0]
    has_ids = header[0].strip().lower() == "id"
    if has_ids:
        header = header[1:]
        ids = [r[0] for r in rows[1:]]
        body = [r[1:] for r in rows[1:]]
    else:
        ids = None
        body = rows[1:]
    width = len(header)
    for ri, row in enumerate(body):
        if len(row) != width:
            raise DataError(
                f"{path}: ragged row {ri + 1} has {len(row)} cells, expected {width}"
            )
    X = _parse_matrix(body, path, offset=1)
    bad = ~np.isfinite(X)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"{path}: non-finite value at row {r + 1}, column {c}")
    return X, header, ids


def load_responses(path: str, n_expected: int, x_ids=None):
    """Load the response CSV; align by id when both sides carry ids.

    Returns (values array, response column names, class labels flag).
    Classification files may hold non-numeric labels in a single column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one value")
    header = rows[0]
    has_ids = header[0].strip().lower() == "id"
    if has_ids:
        header = header[1:]
        ids = [r[0] for r in rows[1:]]
        body = [r[1:] for r in rows[1:]]
    else:
        ids = None
        body = rows[1:]
    if len(body) != n_expected:
        raise DataError(
            f"{path}: {len(body)} responses for {n_expected} spectra"
        )
    if has_ids and x_ids is not None:
        lookup = {i: r for i, r in zip(ids, body)}
        missing = [i for i in x_ids if i not in lookup]
        if missing:
            raise DataError(f"{path}: no response for id {missing[0]!r}")
        body = [lookup[i] for i in x_ids]
    try:
        vals = np.asarray(body, dtype=np.float64)
        numeric = True
    except (ValueError, TypeError):
        if len(header) != 1:
            _parse_matrix(body, path, offset=1)  # raises with coordinates
        vals = np.asarray([r[0] for r in body])
        numeric = False
    if numeric:
        bad = ~np.isfinite(vals)
        if bad.any():
            r, c = np.argwhere(np.atleast_2d(bad))[0]
            raise DataError(f"{path}: non-finite value at row {r + 1}, column {c}")
    return vals, header, not numeric


def write_predictions(path: str, preds, ids=None, columns=None) -> None:
    preds = np.asarray(preds)
    if preds.ndim == 1:
        preds = preds[:, None]
    textual = preds.dtype.kind in "USO"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        names = columns or [f"pred{i}" for i in range(preds.shape[1])]
        w.writerow((["id"] if ids is not None else []) + list(names))
        for ri in range(preds.shape[0]):
            row = [ids[ri]] if ids is not None else []
            for ci in range(preds.shape[1]):
                v = preds[ri, ci]
                row.append(str(v) if textual else repr(float(v)))
            w.writerow(row)
