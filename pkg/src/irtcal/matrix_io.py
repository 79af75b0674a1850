"""CSV ingestion and emission for response matrices.

Format: UTF-8, comma-separated; first row is an empty corner cell followed
by item labels; each subsequent row is a person label followed by cells
that are 0, 1, or empty (missing).
"""

from __future__ import annotations

import csv

from .errors import DomainError
from .model import ResponseMatrix

import numpy as np


class MatrixParseError(DomainError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column else "") \
                + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


def read_matrix_csv(path) -> ResponseMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 3:
        raise MatrixParseError("need a header row and at least 2 person rows",
                               line=len(rows))
    item_ids = [c.strip() for c in rows[0][1:]]
    if len(item_ids) < 2 or any(not c for c in item_ids):
        raise MatrixParseError("header must list at least 2 item labels",
                               line=1)
    person_ids = []
    data = np.full((len(rows) - 1, len(item_ids)), np.nan)
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(item_ids) + 1:
            raise MatrixParseError(
                f"expected {len(item_ids) + 1} cells, got {len(row)}",
                line=ln)
        label = row[0].strip()
        if not label:
            raise MatrixParseError("missing person label", line=ln, column=1)
        person_ids.append(label)
        for col, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            if cell == "":
                continue
            if cell not in ("0", "1"):
                raise MatrixParseError(
                    f"cell must be 0, 1, or empty, got {cell!r}",
                    line=ln, column=col)
            data[ln - 2, col - 2] = float(cell)
    try:
        return ResponseMatrix(data, tuple(person_ids), tuple(item_ids))
    except DomainError as exc:
        raise MatrixParseError(str(exc)) from exc


def write_matrix_csv(matrix: ResponseMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(matrix.item_ids))
        for i, pid in enumerate(matrix.person_ids):
            row = [pid]
            for v in matrix.responses[i]:
                row.append("" if np.isnan(v) else str(int(v)))
            w.writerow(row)
