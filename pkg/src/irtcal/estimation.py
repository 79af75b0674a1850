"""Joint maximum-likelihood estimation for all four model variants.

The optimizer is block-coordinate ascent: with items held fixed, each
person's log-likelihood depends only on that person's own parameters, so a
whole block (all thetas, all betas, or a free discrimination block) can be
updated in one vectorized damped Newton step using expected information as
the curvature.  Per-unit step halving keeps the ascent monotone.

Non-Rasch models warm-start from the Rasch solution with all free
discriminations at sqrt(2), the point where the richer models collapse to
the Rasch model exactly.

Known caveat: joint ML estimates are statistically inconsistent for fixed
test length (the classic incidental-parameters effect); no bias correction
is applied here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, NumericFailureError, RefusalError
from .model import (
    SQRT2,
    Link,
    ModelKind,
    ModelSpec,
    ParameterSet,
    ResponseMatrix,
    clamp_probability,
    link_eval,
    link_pdf,
    probability_matrix,
)

# hard cap on |theta|, |beta| during iteration; generous versus any
# realistic logit/probit scale
ABILITY_CAP = 30.0

MAX_HALVINGS = 30
ASCENT_SLACK = 1e-12


class ExtremeScorePolicy(Enum):
    EXCLUDE = "exclude"
    PENALIZE = "penalize"


@dataclass(frozen=True)
class EstimationConfig:
    max_iterations: int = 500
    tolerance: float = 1e-4
    d_bounds: tuple = (0.2, 5.0)
    step_damping: float = 1.0
    extreme_score_policy: ExtremeScorePolicy = ExtremeScorePolicy.EXCLUDE
    penalty_weight: float = 0.01

    def __post_init__(self):
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")
        lo, hi = self.d_bounds
        if not (0 < lo <= SQRT2 <= hi):
            raise DomainError("d_bounds must satisfy 0 < lower <= sqrt(2) <= upper")
        if not (0 < self.step_damping <= 1):
            raise DomainError("step_damping must be in (0, 1]")


@dataclass(frozen=True)
class FitResult:
    """Converged parameters plus the ascent trace.

    Parameter vectors are full length for the input matrix, with NaN at
    excluded positions.  `loglik_trace` records the ascended objective per
    iteration (the penalized objective under the Penalize policy).
    """

    spec: ModelSpec
    params: ParameterSet
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    excluded_persons: tuple = field(default_factory=tuple)
    excluded_items: tuple = field(default_factory=tuple)


def _check_dims(matrix: ResponseMatrix, params: ParameterSet):
    if params.theta.shape[0] != matrix.n_persons:
        raise DomainError("theta length does not match matrix")
    if params.beta.shape[0] != matrix.n_items:
        raise DomainError("beta length does not match matrix")


def log_likelihood(matrix: ResponseMatrix, params: ParameterSet,
                   spec: ModelSpec) -> float:
    """Bernoulli log-likelihood over observed cells; always <= 0."""
    _check_dims(matrix, params)
    p = probability_matrix(spec, params)
    x = matrix.responses
    obs = matrix.observed
    terms = np.where(obs, np.nan_to_num(x) * np.log(p)
                     + (1.0 - np.nan_to_num(x)) * np.log1p(-p), 0.0)
    return float(terms.sum())


def _effective_d(spec: ModelSpec, params: ParameterSet):
    d_i = params.d_person if spec.kind.frees_person_d \
        else np.full(params.theta.shape, SQRT2)
    d_j = params.d_item if spec.kind.frees_item_d \
        else np.full(params.beta.shape, SQRT2)
    return d_i, d_j


def _cell_quantities(matrix: ResponseMatrix, params: ParameterSet,
                     spec: ModelSpec):
    """Per-cell weight w = dL/d(eta) and squared-information kernel."""
    d_i, d_j = _effective_d(spec, params)
    a = d_i[:, None] * d_j[None, :] / np.hypot(d_i[:, None], d_j[None, :])
    diff = params.theta[:, None] - params.beta[None, :]
    eta = a * diff
    p = clamp_probability(link_eval(spec.link, eta))
    f = link_pdf(spec.link, eta)
    x = np.nan_to_num(matrix.responses)
    obs = matrix.observed
    pq = p * (1.0 - p)
    w = np.where(obs, (x - p) * f / pq, 0.0)
    k = np.where(obs, f * f / pq, 0.0)  # expected info kernel per cell
    return a, diff, w, k, d_i, d_j


def loglik_gradient(matrix: ResponseMatrix, params: ParameterSet,
                    spec: ModelSpec) -> dict:
    """Analytic gradient of `log_likelihood` over the free parameters.

    Returns a dict with keys 'theta' and 'beta' always, plus 'd_person'
    and/or 'd_item' when the model frees them.
    """
    _check_dims(matrix, params)
    a, diff, w, _, d_i, d_j = _cell_quantities(matrix, params, spec)
    grad = {
        "theta": (w * a).sum(axis=1),
        "beta": -(w * a).sum(axis=0),
    }
    denom = np.power(np.square(d_i[:, None]) + np.square(d_j[None, :]), 1.5)
    if spec.kind.frees_person_d:
        da = np.power(d_j[None, :], 3) / denom
        grad["d_person"] = (w * diff * da).sum(axis=1)
    if spec.kind.frees_item_d:
        da = np.power(d_i[:, None], 3) / denom
        grad["d_item"] = (w * diff * da).sum(axis=0)
    return grad


def _find_exclusions(responses: np.ndarray):
    """Persons/items whose observed responses are all 0 or all 1.

    Removal of one axis can create new extreme units on the other, so the
    scan repeats until stable.  Returns boolean keep-masks.
    """
    n, m = responses.shape
    keep_p = np.ones(n, dtype=bool)
    keep_i = np.ones(m, dtype=bool)
    while True:
        sub = responses[np.ix_(keep_p, keep_i)]
        obs = ~np.isnan(sub)
        s = np.nansum(sub, axis=1)
        c = obs.sum(axis=1)
        bad_p = (c == 0) | (s == 0) | (s == c)
        s = np.nansum(sub, axis=0)
        c = obs.sum(axis=0)
        bad_i = (c == 0) | (s == 0) | (s == c)
        if not bad_p.any() and not bad_i.any():
            return keep_p, keep_i
        keep_p[np.flatnonzero(keep_p)[bad_p]] = False
        keep_i[np.flatnonzero(keep_i)[bad_i]] = False


class _Fitter:
    """Block-coordinate ascent on one (already reduced) matrix."""

    def __init__(self, matrix: ResponseMatrix, spec: ModelSpec,
                 cfg: EstimationConfig):
        self.x = np.nan_to_num(matrix.responses)
        self.obs = matrix.observed
        self.spec = spec
        self.cfg = cfg
        self.penalized = (cfg.extreme_score_policy
                          is ExtremeScorePolicy.PENALIZE)
        self.n, self.m = self.x.shape

    # -- objective ---------------------------------------------------------

    def _cells(self, theta, beta, d_i, d_j):
        a = d_i[:, None] * d_j[None, :] / np.hypot(d_i[:, None], d_j[None, :])
        eta = a * (theta[:, None] - beta[None, :])
        p = clamp_probability(link_eval(self.spec.link, eta))
        return a, eta, p

    def _cell_ll(self, p):
        return np.where(self.obs,
                        self.x * np.log(p) + (1.0 - self.x) * np.log1p(-p),
                        0.0)

    def _objective(self, theta, beta, d_i, d_j) -> float:
        _, _, p = self._cells(theta, beta, d_i, d_j)
        val = float(self._cell_ll(p).sum())
        if self.penalized:
            val -= self.cfg.penalty_weight * (np.sum(theta ** 2)
                                              + np.sum(beta ** 2))
        if not np.isfinite(val):
            bad = np.argwhere(~np.isfinite(self._cell_ll(p)))
            i, j = (bad[0] if len(bad) else (None, None))
            raise NumericFailureError(
                f"non-finite likelihood at cell ({i}, {j})", person=i, item=j)
        return val

    # -- block machinery ---------------------------------------------------

    def _monotone_step(self, values, step, unit_ll, lo=None, hi=None):
        """Accept per-unit Newton steps, halving any that do not ascend."""
        base = unit_ll(values)
        result = values.copy()
        pending = np.ones(len(values), dtype=bool)
        cur = step.copy()
        for _ in range(MAX_HALVINGS):
            trial = np.where(pending, values + cur, result)
            if lo is not None:
                trial = np.clip(trial, lo, hi)
            ll = unit_ll(trial)
            ok = pending & (ll >= base - ASCENT_SLACK)
            result[ok] = trial[ok]
            pending &= ~ok
            if not pending.any():
                break
            cur[pending] *= 0.5
        return result

    def _update_theta(self, theta, beta, d_i, d_j):
        a, eta, p = self._cells(theta, beta, d_i, d_j)
        f = link_pdf(self.spec.link, eta)
        pq = p * (1.0 - p)
        w = np.where(self.obs, (self.x - p) * f / pq, 0.0)
        k = np.where(self.obs, f * f / pq, 0.0)
        grad = (w * a).sum(axis=1)
        info = (k * a * a).sum(axis=1)
        if self.penalized:
            grad -= 2.0 * self.cfg.penalty_weight * theta
            info += 2.0 * self.cfg.penalty_weight
        step = self.cfg.step_damping * grad / np.maximum(info, 1e-10)
        np.clip(step, -2.0, 2.0, out=step)

        def unit_ll(v):
            _, _, pp = self._cells(v, beta, d_i, d_j)
            out = self._cell_ll(pp).sum(axis=1)
            if self.penalized:
                out = out - self.cfg.penalty_weight * v ** 2
            return out

        return self._monotone_step(theta, step, unit_ll,
                                   -ABILITY_CAP, ABILITY_CAP)

    def _update_beta(self, theta, beta, d_i, d_j):
        a, eta, p = self._cells(theta, beta, d_i, d_j)
        f = link_pdf(self.spec.link, eta)
        pq = p * (1.0 - p)
        w = np.where(self.obs, (self.x - p) * f / pq, 0.0)
        k = np.where(self.obs, f * f / pq, 0.0)
        grad = -(w * a).sum(axis=0)
        info = (k * a * a).sum(axis=0)
        if self.penalized:
            grad -= 2.0 * self.cfg.penalty_weight * beta
            info += 2.0 * self.cfg.penalty_weight
        step = self.cfg.step_damping * grad / np.maximum(info, 1e-10)
        np.clip(step, -2.0, 2.0, out=step)

        def unit_ll(v):
            _, _, pp = self._cells(theta, v, d_i, d_j)
            out = self._cell_ll(pp).sum(axis=0)
            if self.penalized:
                out = out - self.cfg.penalty_weight * v ** 2
            return out

        return self._monotone_step(beta, step, unit_ll,
                                   -ABILITY_CAP, ABILITY_CAP)

    def _update_d(self, which: str, theta, beta, d_i, d_j):
        a, eta, p = self._cells(theta, beta, d_i, d_j)
        f = link_pdf(self.spec.link, eta)
        pq = p * (1.0 - p)
        diff = theta[:, None] - beta[None, :]
        w = np.where(self.obs, (self.x - p) * f / pq, 0.0)
        k = np.where(self.obs, f * f / pq, 0.0)
        denom = np.power(np.square(d_i[:, None]) + np.square(d_j[None, :]), 1.5)
        lo, hi = self.cfg.d_bounds
        if which == "person":
            da = np.power(d_j[None, :], 3) / denom
            grad = (w * diff * da).sum(axis=1)
            info = (k * np.square(diff * da)).sum(axis=1)
            step = self.cfg.step_damping * grad / np.maximum(info, 1e-10)
            np.clip(step, -1.0, 1.0, out=step)

            def unit_ll(v):
                _, _, pp = self._cells(theta, beta, v, d_j)
                return self._cell_ll(pp).sum(axis=1)

            return self._monotone_step(d_i, step, unit_ll, lo, hi)
        else:
            da = np.power(d_i[:, None], 3) / denom
            grad = (w * diff * da).sum(axis=0)
            info = (k * np.square(diff * da)).sum(axis=0)
            step = self.cfg.step_damping * grad / np.maximum(info, 1e-10)
            np.clip(step, -1.0, 1.0, out=step)

            def unit_ll(v):
                _, _, pp = self._cells(theta, beta, d_i, v)
                return self._cell_ll(pp).sum(axis=0)

            return self._monotone_step(d_j, step, unit_ll, lo, hi)

    # -- main loop ---------------------------------------------------------

    def run(self, theta0, beta0, d_person0, d_item0):
        theta = theta0.copy()
        beta = beta0.copy()
        kind = self.spec.kind
        d_i = d_person0.copy() if kind.frees_person_d \
            else np.full(self.n, SQRT2)
        d_j = d_item0.copy() if kind.frees_item_d else np.full(self.m, SQRT2)
        lo, hi = self.cfg.d_bounds
        d_i = np.clip(d_i, lo, hi) if kind.frees_person_d else d_i
        d_j = np.clip(d_j, lo, hi) if kind.frees_item_d else d_j

        trace = []
        converged = False
        it = 0
        for it in range(1, self.cfg.max_iterations + 1):
            prev = np.concatenate([theta, beta,
                                   d_i if kind.frees_person_d else [],
                                   d_j if kind.frees_item_d else []])
            theta = self._update_theta(theta, beta, d_i, d_j)
            beta = self._update_beta(theta, beta, d_i, d_j)
            # location gauge: mean(theta) = 0; shifting both keeps the
            # likelihood exactly unchanged
            shift = theta.mean()
            theta -= shift
            beta -= shift
            if kind.frees_person_d:
                d_i = self._update_d("person", theta, beta, d_i, d_j)
            if kind.frees_item_d:
                d_j = self._update_d("item", theta, beta, d_i, d_j)
            if kind is ModelKind.THREE_PARAM:
                theta, beta, d_i, d_j = self._rescale(theta, beta, d_i, d_j)
            trace.append(self._objective(theta, beta, d_i, d_j))
            cur = np.concatenate([theta, beta,
                                  d_i if kind.frees_person_d else [],
                                  d_j if kind.frees_item_d else []])
            if np.max(np.abs(cur - prev)) < self.cfg.tolerance:
                converged = True
                break
        return theta, beta, d_i, d_j, np.array(trace), it, converged

    def _rescale(self, theta, beta, d_i, d_j):
        """Scale gauge for the three-parameter model.

        Scaling every free discrimination by s and dividing theta, beta
        by s leaves every success probability unchanged; the geometric
        mean of the free block is pinned at sqrt(2).  Skipped if the
        rescale would push any d outside its bounds (the likelihood-
        preserving move must stay feasible).
        """
        g = math.exp(float(np.mean(np.log(np.concatenate([d_i, d_j])))))
        if g <= 0 or not np.isfinite(g):
            return theta, beta, d_i, d_j
        s = SQRT2 / g
        lo, hi = self.cfg.d_bounds
        new_i, new_j = d_i * s, d_j * s
        if (new_i.min() < lo - 1e-12 or new_i.max() > hi + 1e-12
                or new_j.min() < lo - 1e-12 or new_j.max() > hi + 1e-12):
            return theta, beta, d_i, d_j
        return theta / s, beta / s, np.clip(new_i, lo, hi), \
            np.clip(new_j, lo, hi)


def _initial_values(responses: np.ndarray):
    """Classical logit starting values from raw proportions."""
    obs = ~np.isnan(responses)
    s = np.nansum(responses, axis=1)
    c = obs.sum(axis=1)
    pr = np.clip(s / c, 0.02, 0.98)
    theta = np.log(pr / (1.0 - pr))
    s = np.nansum(responses, axis=0)
    c = obs.sum(axis=0)
    pr = np.clip(s / c, 0.02, 0.98)
    beta = -np.log(pr / (1.0 - pr))
    theta -= theta.mean()
    return theta, beta


def _reduce_matrix(matrix: ResponseMatrix, cfg: EstimationConfig):
    obs = matrix.observed
    if not obs.any(axis=1).all() or not obs.any(axis=0).all():
        raise DomainError("matrix has an all-missing row or column")
    if cfg.extreme_score_policy is ExtremeScorePolicy.EXCLUDE:
        keep_p, keep_i = _find_exclusions(matrix.responses)
    else:
        keep_p = np.ones(matrix.n_persons, dtype=bool)
        keep_i = np.ones(matrix.n_items, dtype=bool)
    if keep_p.sum() < 2 or keep_i.sum() < 2:
        raise RefusalError(
            "fewer than 2 persons or items remain after excluding "
            "extreme scores")
    reduced = ResponseMatrix(
        matrix.responses[np.ix_(keep_p, keep_i)],
        tuple(np.asarray(matrix.person_ids)[keep_p]),
        tuple(np.asarray(matrix.item_ids)[keep_i]),
    )
    return reduced, keep_p, keep_i


def _embed(values: np.ndarray, keep: np.ndarray) -> np.ndarray:
    out = np.full(keep.shape, np.nan)
    out[keep] = values
    return out


def estimate_rasch(matrix: ResponseMatrix, link: Link = Link.LOGISTIC,
                   cfg: EstimationConfig = None) -> FitResult:
    """Fit the one-parameter model (both discriminations fixed at sqrt(2))."""
    return estimate(matrix, ModelSpec(ModelKind.RASCH, link), cfg)


def estimate(matrix: ResponseMatrix, spec: ModelSpec,
             cfg: EstimationConfig = None) -> FitResult:
    """Fit any of the four models by joint maximum likelihood.

    Non-Rasch models warm-start from the Rasch solution on the same
    (reduced) matrix with free discriminations at sqrt(2).
    """
    cfg = cfg or EstimationConfig()
    reduced, keep_p, keep_i = _reduce_matrix(matrix, cfg)

    theta0, beta0 = _initial_values(reduced.responses)
    rasch_spec = ModelSpec(ModelKind.RASCH, spec.link)
    fitter = _Fitter(reduced, rasch_spec, cfg)
    n, m = reduced.n_persons, reduced.n_items
    theta, beta, _, _, trace, its, conv = fitter.run(
        theta0, beta0, np.full(n, SQRT2), np.full(m, SQRT2))

    if spec.kind is not ModelKind.RASCH:
        fitter = _Fitter(reduced, spec, cfg)
        theta, beta, d_i, d_j, trace, its, conv = fitter.run(
            theta, beta, np.full(n, SQRT2), np.full(m, SQRT2))
    else:
        d_i, d_j = np.full(n, SQRT2), np.full(m, SQRT2)

    params = ParameterSet(
        _embed(theta, keep_p), _embed(beta, keep_i),
        _embed(d_i, keep_p), _embed(d_j, keep_i))
    return FitResult(
        spec=spec,
        params=params,
        loglik_trace=trace,
        iterations=its,
        converged=conv,
        excluded_persons=tuple(int(i) for i in np.flatnonzero(~keep_p)),
        excluded_items=tuple(int(j) for j in np.flatnonzero(~keep_i)),
    )
