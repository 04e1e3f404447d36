"""Data sources for export jobs.

A source is a feature CSV (``label,x_0,...,x_{d-1}``) or a directory of
such CSVs, concatenated in filename order. Rows keep their source order so
that row indices downstream are reproducible.
"""

from __future__ import annotations

import os

import numpy as np


class SourceLoadError(RuntimeError):
    pass


def _load_csv(path: str):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise SourceLoadError(f"cannot read data source {path!r}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SourceLoadError(f"data source {path!r} is empty")
    cols = lines[0].split(",")
    if cols[0] != "label" or len(cols) < 2:
        raise SourceLoadError(
            f"data source {path!r}: header must be label,x_0,...,x_{{d-1}}"
        )
    dim = len(cols) - 1
    labels = []
    features = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise SourceLoadError(f"{path!r} line {lineno}: wrong column count")
        try:
            labels.append(int(cells[0]))
            features.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise SourceLoadError(f"{path!r} line {lineno}: {exc}") from exc
    return np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64)


def load_source(path: str):
    """(features, labels) from a CSV file or a directory of CSV files."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".csv"))
        if not names:
            raise SourceLoadError(f"data source directory {path!r} has no CSV files")
        parts = [_load_csv(os.path.join(path, n)) for n in names]
        dims = {p[0].shape[1] for p in parts}
        if len(dims) != 1:
            raise SourceLoadError(f"data source {path!r}: files disagree on dimension")
        return (
            np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
        )
    return _load_csv(path)
