"""Classical test theory statistics and pre-calibration test cleaning.

Difficulty here is the classical proportion-failed q_j.  Discrimination is
the uncorrected Pearson correlation of an item column (or person row) with
the total-score vector; low or negative values flag the item for removal
and the person for review.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, RefusalError, UndefinedCorrelationError
from .model import ResponseMatrix


@dataclass(frozen=True)
class CttReport:
    difficulty: np.ndarray
    item_total_r: np.ndarray
    person_total_r: np.ndarray
    flagged_items: tuple = field(default_factory=tuple)
    flagged_persons: tuple = field(default_factory=tuple)
    item_r_threshold: float = 0.2
    person_quota: float = 0.05


def item_difficulty(matrix: ResponseMatrix, j: int) -> float:
    """Proportion of examinees who failed item j, over observed cells."""
    col = matrix.responses[:, j]
    obs = ~np.isnan(col)
    if not obs.any():
        raise DomainError(f"item {j} has no observed responses")
    return float(np.sum(col[obs] == 0.0) / obs.sum())


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero-variance vector in correlation")
    return float(np.sum(xc * yc) / (sx * sy))


def _person_totals(matrix: ResponseMatrix) -> np.ndarray:
    return np.nansum(matrix.responses, axis=1)


def _item_totals(matrix: ResponseMatrix) -> np.ndarray:
    return np.nansum(matrix.responses, axis=0)


def item_total_correlation(matrix: ResponseMatrix, j: int,
                           corrected: bool = False) -> float:
    """Pearson r between item column j and the person total scores.

    Totals include item j itself unless `corrected` is set, in which case
    item j is dropped from every person's total before correlating.
    """
    col = matrix.responses[:, j]
    obs = ~np.isnan(col)
    totals = _person_totals(matrix)
    if corrected:
        totals = totals - np.where(obs, col, 0.0)
    return _pearson(col[obs], totals[obs])


def person_total_correlation(matrix: ResponseMatrix, i: int,
                             corrected: bool = False) -> float:
    """Pearson r between person row i and the item total scores.

    Transpose-symmetric to `item_total_correlation`.
    """
    return item_total_correlation(matrix.transposed(), i, corrected=corrected)


def _safe_correlations(matrix: ResponseMatrix, axis: str, corrected: bool):
    """Per-item or per-person total correlations with NaN for undefined."""
    n = matrix.n_items if axis == "item" else matrix.n_persons
    fn = item_total_correlation if axis == "item" else person_total_correlation
    out = np.full(n, np.nan)
    for k in range(n):
        try:
            out[k] = fn(matrix, k, corrected=corrected)
        except UndefinedCorrelationError:
            pass
    return out


def ctt_report(matrix: ResponseMatrix, item_r_threshold: float = 0.2,
               person_quota: float = 0.05,
               corrected: bool = False) -> CttReport:
    """Compute CTT statistics and flag weak items/persons without removal."""
    diff = np.array([item_difficulty(matrix, j) for j in range(matrix.n_items)])
    item_r = _safe_correlations(matrix, "item", corrected)
    person_r = _safe_correlations(matrix, "person", corrected)
    flagged_items = tuple(
        int(j) for j in range(matrix.n_items)
        if np.isfinite(item_r[j]) and item_r[j] < item_r_threshold
    )
    flagged_persons = _flag_persons(person_r, person_quota)
    return CttReport(diff, item_r, person_r, flagged_items, flagged_persons,
                     item_r_threshold, person_quota)


def _flag_persons(person_r: np.ndarray, quota: float) -> tuple:
    """Indices of the lowest person-total correlations, at most ceil(quota*n).

    Undefined correlations rank lowest.  The removable share is capped at
    5% of the sample.
    """
    n = len(person_r)
    budget = math.ceil(quota * n) if quota > 0 else 0
    if budget == 0:
        return ()
    order = np.argsort(np.where(np.isnan(person_r), -np.inf, person_r),
                       kind="stable")
    return tuple(int(i) for i in order[:budget])


def clean_test(matrix: ResponseMatrix, item_r_threshold: float = 0.2,
               person_quota: float = 0.05, remove_persons: bool = False,
               corrected: bool = False, fixpoint: bool = False):
    """Single-pass test cleaning: drop weak items, flag weak persons.

    Items whose item-total correlation falls below the threshold are
    removed; totals are recomputed once on the reduced matrix for the
    reported statistics.  Persons are flagged (not removed unless
    `remove_persons`) up to ceil(person_quota * n_persons).  With
    `fixpoint`, item removal iterates until no item is below threshold.

    Returns (reduced ResponseMatrix, CttReport on the reduced matrix).
    """
    if not (0.0 <= person_quota <= 0.05):
        raise DomainError("person_quota must lie in [0, 0.05]")
    if not np.isfinite(item_r_threshold):
        raise DomainError("item_r_threshold must be finite")

    current = matrix
    keep_items = np.arange(matrix.n_items)
    while True:
        item_r = _safe_correlations(current, "item", corrected)
        drop = np.isfinite(item_r) & (item_r < item_r_threshold)
        if not drop.any():
            break
        if current.n_items - int(drop.sum()) < 2:
            raise RefusalError("cleaning would leave fewer than 2 items")
        keep = ~drop
        current = ResponseMatrix(
            current.responses[:, keep],
            current.person_ids,
            tuple(np.asarray(current.item_ids)[keep]),
        )
        keep_items = keep_items[keep]
        if not fixpoint:
            break

    report = ctt_report(current, item_r_threshold, person_quota, corrected)
    removed_items = tuple(
        int(j) for j in range(matrix.n_items) if j not in set(keep_items)
    )
    report = CttReport(report.difficulty, report.item_total_r,
                       report.person_total_r, removed_items,
                       report.flagged_persons, item_r_threshold, person_quota)

    if remove_persons and report.flagged_persons:
        if current.n_persons - len(report.flagged_persons) < 2:
            raise RefusalError("cleaning would leave fewer than 2 persons")
        keep = np.ones(current.n_persons, dtype=bool)
        keep[list(report.flagged_persons)] = False
        current = ResponseMatrix(
            current.responses[keep],
            tuple(np.asarray(current.person_ids)[keep]),
            current.item_ids,
        )
    return current, report
