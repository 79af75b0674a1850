"""Command-line interface: calibrate, simulate, ctt.

Exit codes are a frozen contract:
  0  success
  2  unparseable input or unwritable output
  3  estimation refused (too little data after exclusions/cleaning)
  4  some requested models failed; the rest were still reported
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import analysis, ctt as ctt_mod
from .errors import DomainError, NumericFailureError, RefusalError
from .estimation import EstimationConfig, ExtremeScorePolicy, estimate
from .matrix_io import MatrixParseError, read_matrix_csv, write_matrix_csv
from .model import Link, ModelKind, ModelSpec
from .simulation import make_scenario, simulate as run_simulation

MODEL_ALIASES = {k.value: k for k in ModelKind}
LINK_ALIASES = {"logistic": Link.LOGISTIC, "normal": Link.NORMAL_OGIVE}


def _parse_models(text: str):
    kinds = []
    for token in text.split(","):
        token = token.strip()
        if token not in MODEL_ALIASES:
            raise click.BadParameter(
                f"unknown model {token!r}; choose from "
                + ", ".join(MODEL_ALIASES))
        kinds.append(MODEL_ALIASES[token])
    if not kinds:
        raise click.BadParameter("at least one model is required")
    return kinds


def _load_config_file(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config file: {exc}")


def _merged(cfg_file: dict, key: str, flag_value, default):
    """Flags override the config file; the file overrides defaults."""
    if flag_value is not None:
        return flag_value
    return cfg_file.get(key, default)


def _write_output(text: str, out_path):
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            click.echo(f"error: cannot write output: {exc}", err=True)
            sys.exit(2)
    else:
        click.echo(text, nl=False)
        if not text.endswith("\n"):
            click.echo()


@click.group()
def main():
    """Dichotomous test calibration under four latent-trait models."""


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=False))
@click.option("--models", default=None,
              help="Comma list: rasch,2pl-item,2pl-person,3p")
@click.option("--link", type=click.Choice(list(LINK_ALIASES)), default=None)
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--clean", is_flag=True, default=False,
              help="Run CTT cleaning before calibration.")
@click.option("--item-r-threshold", type=float, default=None)
@click.option("--person-quota", type=float, default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "json"]),
              default=None)
@click.option("--axis", type=click.Choice(["persons", "items", "both"]),
              default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Optional JSON config; flags override it.")
def calibrate(input_path, models, link, tol, max_iter, clean,
              item_r_threshold, person_quota, fmt, axis, out_path,
              config_path):
    """Fit the requested models and emit ranked comparison tables."""
    filecfg = _load_config_file(config_path)
    models = _merged(filecfg, "models", models,
                     "rasch,2pl-item,2pl-person,3p")
    link = LINK_ALIASES[_merged(filecfg, "link", link, "logistic")]
    tol = _merged(filecfg, "tol", tol, 1e-4)
    max_iter = _merged(filecfg, "max_iter", max_iter, 500)
    item_r_threshold = _merged(filecfg, "item_r_threshold",
                               item_r_threshold, 0.2)
    person_quota = _merged(filecfg, "person_quota", person_quota, 0.05)
    fmt = _merged(filecfg, "format", fmt, "text")
    axis = _merged(filecfg, "axis", axis, "both")
    clean = clean or filecfg.get("clean", False)
    kinds = _parse_models(models)

    try:
        matrix = read_matrix_csv(input_path)
    except (OSError, MatrixParseError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    clean_report = None
    if clean:
        try:
            matrix, clean_report = ctt_mod.clean_test(
                matrix, item_r_threshold, person_quota)
        except RefusalError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    cfg = EstimationConfig(max_iterations=max_iter, tolerance=tol)
    fits = {}
    failures = {}
    for kind in kinds:
        spec = ModelSpec(kind, link)
        try:
            fits[spec] = estimate(matrix, spec, cfg)
        except RefusalError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except (NumericFailureError, DomainError) as exc:
            failures[spec] = str(exc)
            click.echo(f"warning: {spec.label} failed: {exc}", err=True)
    if not fits:
        click.echo("error: every requested model failed", err=True)
        sys.exit(3)

    three_p = [s for s in fits if s.kind is ModelKind.THREE_PARAM]
    if three_p:
        baseline = three_p[0]
    else:
        baseline = ModelSpec(kinds[-1], link)
        if baseline not in fits:
            baseline = list(fits)[-1]
        if len(fits) > 1:
            click.echo(
                f"warning: no 3p model requested; comparing against "
                f"{baseline.label}", err=True)

    axes = ["persons", "items"] if axis == "both" else [axis]
    report = _build_report(matrix, fits, baseline, axes, clean_report)
    _write_output(_render_report(report, fmt), out_path)
    sys.exit(4 if failures else 0)


def _build_report(matrix, fits, baseline, axes, clean_report):
    results = list(fits.items())
    tables = {}
    comparisons = {}
    for ax in axes:
        table = analysis.ranked_table(results, ax, baseline)
        tables[ax] = table
        if len(results) > 1:
            vectors = []
            for spec, fit in results:
                v = fit.params.theta if ax == "persons" else fit.params.beta
                v = v[np.isfinite(v)]
                vectors.append((spec, v))
            lengths = {len(v) for _, v in vectors}
            if len(lengths) == 1 and lengths.pop() >= 4:
                comparisons[ax] = analysis.compare_models(
                    vectors, baseline, len(vectors[0][1]))
    report = {"tables": tables, "comparisons": comparisons, "fits": fits,
              "baseline": baseline}
    if clean_report is not None:
        report["cleaning"] = clean_report
    return report


def _render_report(report, fmt):
    if fmt == "text":
        parts = []
        if "cleaning" in report:
            cr = report["cleaning"]
            parts.append(
                f"Cleaning: removed items {list(cr.flagged_items)}, "
                f"flagged persons {list(cr.flagged_persons)}")
        for ax, table in report["tables"].items():
            parts.append(analysis.render_table_text(table))
        for ax, comp in report["comparisons"].items():
            parts.append(f"[{ax}] " + analysis.render_comparison_text(comp))
        for spec, fit in report["fits"].items():
            parts.append(
                f"{spec.label}: loglik={fit.loglik_trace[-1]:.4f} "
                f"iters={fit.iterations} converged={fit.converged} "
                f"excluded_persons={list(fit.excluded_persons)} "
                f"excluded_items={list(fit.excluded_items)}")
        return "\n\n".join(parts) + "\n"
    if fmt == "csv":
        return "\n".join(analysis.render_table_csv(t)
                         for t in report["tables"].values())
    return json.dumps(_report_dict(report), indent=2)


def _report_dict(report):
    out = {
        "baseline": report["baseline"].label,
        "tables": {ax: analysis.table_to_dict(t)
                   for ax, t in report["tables"].items()},
        "comparisons": {ax: analysis.comparison_to_dict(c)
                        for ax, c in report["comparisons"].items()},
        "fits": {},
    }
    for spec, fit in report["fits"].items():
        out["fits"][spec.label] = {
            "theta": _vec(fit.params.theta),
            "beta": _vec(fit.params.beta),
            "d_person": _vec(fit.params.d_person),
            "d_item": _vec(fit.params.d_item),
            "loglik": float(fit.loglik_trace[-1]),
            "iterations": fit.iterations,
            "converged": fit.converged,
            "excluded_persons": list(fit.excluded_persons),
            "excluded_items": list(fit.excluded_items),
        }
    if "cleaning" in report:
        cr = report["cleaning"]
        out["cleaning"] = {
            "removed_items": list(cr.flagged_items),
            "flagged_persons": list(cr.flagged_persons),
        }
    return out


def _vec(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


@main.command()
@click.option("--persons", type=int, required=True)
@click.option("--items", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--model", default="3p",
              type=click.Choice(list(MODEL_ALIASES)))
@click.option("--link", type=click.Choice(list(LINK_ALIASES)),
              default="logistic")
@click.option("--d-spread", type=float, default=0.0)
@click.option("--out", "out_path", type=click.Path(), required=True)
def simulate(persons, items, seed, model, link, d_spread, out_path):
    """Write a seeded synthetic response matrix plus a sidecar JSON with
    the true parameters."""
    spec = ModelSpec(MODEL_ALIASES[model], LINK_ALIASES[link])
    try:
        scenario = make_scenario(spec, persons, items, seed, d_spread)
    except DomainError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    matrix = run_simulation(scenario)
    sidecar = {
        "model": spec.label,
        "seed": seed,
        "d_spread": d_spread,
        "theta": [float(x) for x in scenario.true_params.theta],
        "beta": [float(x) for x in scenario.true_params.beta],
        "d_person": [float(x) for x in scenario.true_params.d_person],
        "d_item": [float(x) for x in scenario.true_params.d_item],
    }
    try:
        write_matrix_csv(matrix, out_path)
        with open(str(out_path) + ".params.json", "w",
                  encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2)
    except OSError as exc:
        click.echo(f"error: cannot write output: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--item-r-threshold", type=float, default=0.2)
@click.option("--person-quota", type=float, default=0.05)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text")
@click.option("--out", "out_path", type=click.Path(), default=None)
def ctt(input_path, item_r_threshold, person_quota, fmt, out_path):
    """Classical item/person statistics and cleaning flags."""
    try:
        matrix = read_matrix_csv(input_path)
    except (OSError, MatrixParseError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    report = ctt_mod.ctt_report(matrix, item_r_threshold, person_quota)
    if fmt == "json":
        payload = {
            "difficulty": _vec(report.difficulty),
            "item_total_r": _vec(report.item_total_r),
            "person_total_r": _vec(report.person_total_r),
            "flagged_items": list(report.flagged_items),
            "flagged_persons": list(report.flagged_persons),
            "item_r_threshold": report.item_r_threshold,
            "person_quota": report.person_quota,
        }
        _write_output(json.dumps(payload, indent=2), out_path)
    else:
        lines = ["item  difficulty  item_total_r  flagged"]
        for j, iid in enumerate(matrix.item_ids):
            r = report.item_total_r[j]
            r_txt = f"{r:.3f}" if np.isfinite(r) else "undef"
            flag = "*" if j in report.flagged_items else ""
            lines.append(f"{iid:>4}  {report.difficulty[j]:>10.3f}  "
                         f"{r_txt:>12}  {flag}")
        lines.append("")
        lines.append("person  person_total_r  flagged")
        for i, pid in enumerate(matrix.person_ids):
            r = report.person_total_r[i]
            r_txt = f"{r:.3f}" if np.isfinite(r) else "undef"
            flag = "*" if i in report.flagged_persons else ""
            lines.append(f"{pid:>6}  {r_txt:>14}  {flag}")
        _write_output("\n".join(lines) + "\n", out_path)
    sys.exit(0)


if __name__ == "__main__":
    main()
