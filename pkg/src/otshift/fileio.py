"""CSV and JSON interchange for scores, distributions, predictions, and
reweight vectors.

All floats serialize with 17 significant digits, enough to round-trip
float64 exactly, so repeated runs produce byte-identical files. Class
indices are 1-based everywhere on disk.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .adapter import Hierarchy
from .core import (
    LabelDistribution,
    Predictions,
    ScoreMatrix,
    validate_scores,
)
from .errors import ParseError, ValidationError
from .reweight import ReweightVector


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(
            f"cell {cell!r} at row {row}, column {col} is not a number",
            row=row,
            col=col,
        ) from None


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row]


def read_scores(path) -> ScoreMatrix:
    """Load an n x K probability matrix from CSV.

    A single leading header row is skipped when its first cell is not
    numeric. Every data row must have the same number of columns.
    """
    rows = _read_csv_rows(path)
    if not rows:
        raise ParseError(f"{path}: no data rows", row=1)
    start = 0
    try:
        float(rows[0][0])
    except ValueError:
        start = 1
    if start == len(rows):
        raise ParseError(f"{path}: only a header row", row=1)
    width = len(rows[start])
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ParseError(
                f"{path}: row {i} has {len(row)} columns, expected {width}",
                row=i,
            )
        for j, cell in enumerate(row, start=1):
            data[i - start - 1, j - 1] = _parse_float(cell, i, j)
    return validate_scores(data)


def read_distribution(path) -> LabelDistribution:
    """Load a distribution from one CSV row or JSON {"probs": [...]}."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad JSON ({exc})", row=exc.lineno,
                             col=exc.colno) from None
        if not isinstance(payload, dict) or "probs" not in payload:
            raise ParseError(f'{path}: JSON must be an object with "probs"')
        values = payload["probs"]
        if not isinstance(values, list) or not values:
            raise ParseError(f'{path}: "probs" must be a non-empty list')
        return LabelDistribution(np.asarray(values, dtype=np.float64))
    rows = [row for row in csv.reader(stripped.splitlines()) if row]
    if len(rows) != 1:
        raise ParseError(
            f"{path}: expected one CSV row, found {len(rows)}", row=1
        )
    vals = [_parse_float(cell, 1, j) for j, cell in enumerate(rows[0], 1)]
    return LabelDistribution(np.array(vals))


def write_distribution(nu: LabelDistribution, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_fmt(p) for p in nu.probs) + "\n")


def write_predictions(p: Predictions, path) -> None:
    """CSV with header index,label; both columns 1-based."""
    with open(path, "w", newline="") as fh:
        fh.write("index,label\n")
        for i, label in enumerate(p.labels, start=1):
            fh.write(f"{i},{int(label)}\n")


def read_predictions(path, k: int | None = None) -> Predictions:
    """Load a predictions CSV written by write_predictions.

    Also accepts a bare one-column list of labels without the index column.
    k defaults to the largest label seen.
    """
    rows = _read_csv_rows(path)
    if not rows:
        raise ParseError(f"{path}: no data rows", row=1)
    start = 1 if rows[0] and rows[0][0].strip().lower() in ("index", "label") else 0
    labels = []
    for i, row in enumerate(rows[start:], start=start + 1):
        cell = row[-1]
        try:
            labels.append(int(cell))
        except ValueError:
            raise ParseError(
                f"label {cell!r} at row {i} is not an integer",
                row=i,
                col=len(row),
            ) from None
    if not labels:
        raise ParseError(f"{path}: no label rows", row=1)
    arr = np.asarray(labels, dtype=np.int64)
    if arr.min() < 1:
        raise ValidationError(f"{path}: labels must be 1-based positive")
    return Predictions(labels=arr, k=k or int(arr.max()))


def write_reweight(rw: ReweightVector, path, temperature: float | None = None
                   ) -> None:
    """JSON {"k": K, "r": [...]}; pm fits add their selected temperature."""
    payload = {"k": rw.k, "r": [float(x) for x in rw.r]}
    if temperature is not None:
        payload["temperature"] = float(temperature)
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_reweight(path) -> ReweightVector:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad JSON ({exc})", row=exc.lineno,
                             col=exc.colno) from None
    if not isinstance(payload, dict) or "r" not in payload:
        raise ParseError(f'{path}: JSON must be an object with "r"')
    r = np.asarray(payload["r"], dtype=np.float64)
    rw = ReweightVector(r)
    if "k" in payload and int(payload["k"]) != rw.k:
        raise ParseError(
            f'{path}: "k" is {payload["k"]} but "r" has {rw.k} entries'
        )
    return rw


def read_hierarchy(path) -> Hierarchy:
    """JSON {"groups": [[1-based subclass indices], ...]}."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad JSON ({exc})", row=exc.lineno,
                             col=exc.colno) from None
    if not isinstance(payload, dict) or "groups" not in payload:
        raise ParseError(f'{path}: JSON must be an object with "groups"')
    groups = payload["groups"]
    if not isinstance(groups, list) or not all(
        isinstance(g, list) for g in groups
    ):
        raise ParseError(f'{path}: "groups" must be a list of lists')
    return Hierarchy(groups=tuple(tuple(int(i) for i in g) for g in groups))


def read_conditionals(path):
    """JSON {"conditionals": [[...], ...]}, one distribution per group."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad JSON ({exc})", row=exc.lineno,
                             col=exc.colno) from None
    if not isinstance(payload, dict) or "conditionals" not in payload:
        raise ParseError(
            f'{path}: JSON must be an object with "conditionals"'
        )
    conds = payload["conditionals"]
    if not isinstance(conds, list) or not all(
        isinstance(c, list) for c in conds
    ):
        raise ParseError(f'{path}: "conditionals" must be a list of lists')
    return tuple(
        LabelDistribution(np.asarray(c, dtype=np.float64)) for c in conds
    )
