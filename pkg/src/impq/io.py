"""Matrix files: ``{"dim": n, "entries": [[[re, im], ...], ...]}``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .operators import MatrixFormatError, matrix_from_json, matrix_to_json


def save_matrix(path, m) -> None:
    Path(path).write_text(json.dumps(matrix_to_json(m), allow_nan=False) + "\n")


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return matrix_from_json(doc)
    except MatrixFormatError as exc:
        raise MatrixFormatError(f"{path}: {exc}") from exc
