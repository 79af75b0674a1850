"""Scale standardization, model-comparison statistics, and report tables.

Fitted strengths from different models live on scales related only by a
linear map, so every cross-model statistic here runs on standardized
values (mean 0, sample SD 1).  Correlation differences are tested through
Fisher's z with variance 1/(n-3), one-sided at the 10% level (critical
value 1.64).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .estimation import FitResult
from .model import ModelKind, ModelSpec

CRITICAL_10PCT = 1.64

# the source analysis accepted a ratio of 1.60 as reaching the ~1.64
# boundary; ratios within 3% below the critical value count as significant
BOUNDARY_MARGIN = 0.03

# canonical column order: one-parameter model, item-discrimination
# variant, person-discrimination variant, full model
MODEL_ORDER = (ModelKind.RASCH, ModelKind.TWO_PARAM_ITEM,
               ModelKind.TWO_PARAM_PERSON, ModelKind.THREE_PARAM)


def standardize(values, ddof: int = 1) -> np.ndarray:
    """Linearly map values to mean 0 and sample SD 1 (denominator n-1).

    Order-preserving; idempotent on already-standardized input.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise DomainError("standardize needs a vector of length >= 2")
    sd = v.std(ddof=ddof)
    if sd == 0.0 or not np.isfinite(sd):
        raise DomainError("cannot standardize a zero-variance vector")
    return (v - v.mean()) / sd


def pearson_r(x, y) -> float:
    """Pearson product-moment correlation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError("correlation inputs must have equal length")
    if len(x) < 3:
        raise DomainError("correlation needs length >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(np.sum(xc * xc)))
    sy = math.sqrt(float(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        raise DomainError("zero-variance vector in correlation")
    return float(np.clip(np.sum(xc * yc) / (sx * sy), -1.0, 1.0))


def fisher_z(r: float) -> float:
    """Fisher's variance-stabilizing transform z = 0.5 ln((1+r)/(1-r))."""
    if not -1.0 < r < 1.0:
        raise DomainError("fisher_z requires |r| < 1")
    return float(np.arctanh(r))


def fisher_z_inverse(z: float) -> float:
    return float(np.tanh(z))


def z_sigma(n: int) -> float:
    """Standard deviation of Fisher's z: sqrt(1/(n-3))."""
    if n < 4:
        raise DomainError("z_sigma requires n >= 4")
    return math.sqrt(1.0 / (n - 3))


@dataclass(frozen=True)
class ModelCorrelation:
    spec: ModelSpec
    r: float
    z: float


@dataclass(frozen=True)
class PairComparison:
    model_a: ModelSpec
    model_b: ModelSpec
    delta: float
    sigma_delta: float
    ratio: float
    significant_at_10pct: bool


@dataclass(frozen=True)
class ComparisonReport:
    baseline_model: ModelSpec
    compared: tuple
    sigma_z: float
    n: int
    pairwise: tuple


def compare_z_pair(z_a: float, z_b: float, n: int):
    """Delta, sigma_delta, ratio, and the one-sided 10% verdict."""
    sd = math.sqrt(2.0) * z_sigma(n)
    delta = abs(z_a - z_b)
    ratio = delta / sd
    significant = ratio >= CRITICAL_10PCT * (1.0 - BOUNDARY_MARGIN)
    return delta, sd, ratio, significant


def compare_models(param_vectors, baseline: ModelSpec,
                   n: int) -> ComparisonReport:
    """Correlate each model's standardized vector with the baseline's.

    `param_vectors` is a list of (ModelSpec, vector) pairs fitted on the
    same units.  Self-comparison (the baseline with itself, or any pair
    with |r| = 1) is skipped rather than producing an infinite z.
    """
    vectors = {spec: standardize(v) for spec, v in param_vectors}
    if baseline not in vectors:
        raise DomainError("baseline model missing from inputs")
    base_v = vectors[baseline]
    compared = []
    for spec, v in vectors.items():
        if spec == baseline:
            continue
        r = pearson_r(v, base_v)
        if abs(r) >= 1.0 - 1e-12:  # self-comparison, skipped
            continue
        compared.append(ModelCorrelation(spec, r, fisher_z(r)))
    sigma = z_sigma(n)
    pairwise = []
    for a in range(len(compared)):
        for b in range(a + 1, len(compared)):
            ca, cb = compared[a], compared[b]
            delta, sd, ratio, sig = compare_z_pair(ca.z, cb.z, n)
            pairwise.append(PairComparison(ca.spec, cb.spec, delta, sd,
                                           ratio, sig))
    return ComparisonReport(baseline, tuple(compared), sigma, n,
                            tuple(pairwise))


@dataclass(frozen=True)
class RankedTable:
    """One row per person/item, standardized strengths per model.

    Footer correlations/z are versus the sort-by model and omit the
    sort-by column itself.
    """

    axis: str                     # "persons" | "items"
    labels: tuple
    model_labels: tuple
    values: np.ndarray            # len(labels) x len(model_labels)
    sort_by: str
    footer_r: dict = field(default_factory=dict)
    footer_z: dict = field(default_factory=dict)


def _ordered_specs(results):
    def key(pair):
        spec = pair[0]
        try:
            return MODEL_ORDER.index(spec.kind)
        except ValueError:
            return len(MODEL_ORDER)
    return sorted(results, key=key)


def ranked_table(results, axis: str, sort_by: ModelSpec) -> RankedTable:
    """Build the comparison table for one axis.

    Persons sort descending by the sort-by model's strength, items
    ascending.  Units excluded by any
    model (NaN parameters) are dropped from the table.
    """
    if axis not in ("persons", "items"):
        raise DomainError("axis must be 'persons' or 'items'")
    results = _ordered_specs(list(results))
    specs = [spec for spec, _ in results]
    if sort_by not in specs:
        raise DomainError("sort_by model missing from results")

    def extract(fit: FitResult):
        return fit.params.theta if axis == "persons" else fit.params.beta

    lengths = {len(extract(fit)) for _, fit in results}
    if len(lengths) != 1:
        raise DomainError("results were not fitted on the same matrix")
    raw = np.column_stack([extract(fit) for _, fit in results])
    valid = np.all(np.isfinite(raw), axis=1)
    if valid.sum() < 2:
        raise DomainError("fewer than 2 units shared across models")
    std = np.column_stack([standardize(col) for col in raw[valid].T])

    first_fit = results[0][1]
    all_labels = (first_fit.params.theta if axis == "persons"
                  else first_fit.params.beta)
    labels = [f"{k + 1}" for k in range(len(all_labels))]
    labels = [lab for lab, ok in zip(labels, valid) if ok]

    key_col = std[:, specs.index(sort_by)]
    order = np.argsort(-key_col if axis == "persons" else key_col,
                       kind="stable")
    std = std[order]
    labels = tuple(labels[k] for k in order)

    footer_r, footer_z = {}, {}
    if len(specs) > 1:
        base = std[:, specs.index(sort_by)]
        for col, spec in enumerate(specs):
            if spec == sort_by:
                continue
            r = pearson_r(std[:, col], base)
            if abs(r) >= 1.0 - 1e-12:  # self-comparison, skipped
                continue
            footer_r[spec.label] = r
            footer_z[spec.label] = fisher_z(r)
    return RankedTable(axis, labels, tuple(s.label for s in specs), std,
                       sort_by.label, footer_r, footer_z)


# -- serialization ---------------------------------------------------------

def render_table_text(table: RankedTable, decimals: int = 2) -> str:
    head = ["#"] + list(table.model_labels)
    rows = [head]
    for lab, vals in zip(table.labels, table.values):
        rows.append([lab] + [f"{v:.{decimals}f}" for v in vals])
    for name, footer in (("r", table.footer_r), ("z", table.footer_z)):
        if footer:
            rows.append([name] + [
                f"{footer[m]:.3f}" if m in footer else "-"
                for m in table.model_labels])
    widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths))
             for row in rows]
    title = ("Person strengths" if table.axis == "persons"
             else "Item strengths")
    return f"{title} (standardized; sorted by {table.sort_by})\n" \
        + "\n".join(lines)


def render_table_csv(table: RankedTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["#"] + list(table.model_labels))
    for lab, vals in zip(table.labels, table.values):
        w.writerow([lab] + [repr(float(v)) for v in vals])
    for name, footer in (("r", table.footer_r), ("z", table.footer_z)):
        if footer:
            w.writerow([name] + [
                repr(footer[m]) if m in footer else ""
                for m in table.model_labels])
    return buf.getvalue()


def table_to_dict(table: RankedTable) -> dict:
    return {
        "axis": table.axis,
        "sort_by": table.sort_by,
        "models": list(table.model_labels),
        "labels": list(table.labels),
        "values": [[float(v) for v in row] for row in table.values],
        "r": dict(table.footer_r),
        "z": dict(table.footer_z),
    }


def comparison_to_dict(report: ComparisonReport) -> dict:
    return {
        "baseline": report.baseline_model.label,
        "n": report.n,
        "sigma_z": report.sigma_z,
        "models": [
            {"model": c.spec.label, "r": c.r, "z": c.z}
            for c in report.compared
        ],
        "pairwise": [
            {
                "model_a": p.model_a.label,
                "model_b": p.model_b.label,
                "delta": p.delta,
                "sigma_delta": p.sigma_delta,
                "ratio": p.ratio,
                "significant_at_10pct": p.significant_at_10pct,
            }
            for p in report.pairwise
        ],
    }


def render_comparison_text(report: ComparisonReport) -> str:
    lines = [
        f"Model comparison (baseline {report.baseline_model.label}, "
        f"n={report.n}, sigma_z={report.sigma_z:.3f})",
    ]
    for c in report.compared:
        lines.append(f"  {c.spec.label}: r={c.r:.3f}  z={c.z:.3f}")
    for p in report.pairwise:
        verdict = "significant" if p.significant_at_10pct \
            else "not significant"
        lines.append(
            f"  {p.model_a.label} vs {p.model_b.label}: "
            f"delta={p.delta:.3f}  sigma_delta={p.sigma_delta:.3f}  "
            f"ratio={p.ratio:.2f}  {verdict} at 10%")
    return "\n".join(lines)
