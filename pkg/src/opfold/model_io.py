"""Portable model files.

Versioned JSON with a base64-embedded float64 coefficient block and a
human-readable operator log.  A saved file is self-contained for
prediction: raw spectra in, predictions out, no preprocessing state.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    # Little-endian on disk regardless of host, so files port bit-exactly.
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "dtype": "float64",
        "order": "C",
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    a = np.frombuffer(raw, dtype="<f8").reshape(d["shape"])
    return a.astype(np.float64, copy=True)


@dataclass
class Model:
    """Loaded model file: everything prediction needs and the audit log."""

    task: str                 # regression | classification
    method: str               # aom_pls | aom_ridge | fastaom
    coefficients: np.ndarray  # p x q, original wavelength grid
    x_mean: np.ndarray
    y_mean: np.ndarray
    operator_log: dict
    wavelengths: list
    classes: list | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.coefficients.shape[0]:
            raise DataError(
                f"spectrum has {X.shape[1]} channels, model expects "
                f"{self.coefficients.shape[0]}"
            )
        scores = (X - self.x_mean) @ self.coefficients + self.y_mean
        if self.task == "classification":
            return np.asarray(self.classes)[np.argmax(scores, axis=1)]
        return scores


def selection_digest(csv_text: str) -> str:
    return hashlib.sha256(csv_text.encode()).hexdigest()


def save_model(path: str, *, task: str, method: str, coefficients, x_mean,
               y_mean, operator_log: dict, wavelengths, classes=None) -> None:
    """Write the model atomically (temp file + rename)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "task": task,
        "method": method,
        "operator_log": operator_log,
        "x_mean": _encode_array(np.asarray(x_mean)),
        "y_mean": _encode_array(np.asarray(y_mean)),
        "coefficients": _encode_array(np.asarray(coefficients)),
        "wavelengths": list(wavelengths),
    }
    if classes is not None:
        doc["classes"] = [c.item() if hasattr(c, "item") else c for c in classes]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path: str) -> Model:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version}")
    return Model(
        task=doc["task"],
        method=doc["method"],
        coefficients=_decode_array(doc["coefficients"]),
        x_mean=_decode_array(doc["x_mean"]),
        y_mean=_decode_array(doc["y_mean"]),
        operator_log=doc["operator_log"],
        wavelengths=doc["wavelengths"],
        classes=doc.get("classes"),
    )
