"""Core model types and success-probability evaluation.

Four dichotomous models share one evaluation path: the success probability
is always ``link(d_s * (theta - beta))`` where ``d_s`` combines the person
and item discriminations.  Models that exclude a discrimination fix it at
sqrt(2), which makes ``d_s = 1`` when both are fixed, so the one-parameter
model is an exact special case rather than a separate code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit, ndtr

from .errors import DomainError

SQRT2 = math.sqrt(2.0)

# probabilities are clamped away from {0, 1} before entering logarithms
PROB_EPS = 1e-12


class Link(Enum):
    LOGISTIC = "logistic"
    NORMAL_OGIVE = "normal"


class ModelKind(Enum):
    RASCH = "rasch"
    TWO_PARAM_ITEM = "2pl-item"      # free item discrimination (Birnbaum v1)
    TWO_PARAM_PERSON = "2pl-person"  # free person discrimination (Birnbaum v2)
    THREE_PARAM = "3p"               # both discriminations free

    @property
    def frees_person_d(self) -> bool:
        return self in (ModelKind.TWO_PARAM_PERSON, ModelKind.THREE_PARAM)

    @property
    def frees_item_d(self) -> bool:
        return self in (ModelKind.TWO_PARAM_ITEM, ModelKind.THREE_PARAM)


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    link: Link = Link.LOGISTIC

    @property
    def label(self) -> str:
        return f"{self.kind.value}/{self.link.value}"


@dataclass(frozen=True)
class ResponseMatrix:
    """Persons x items grid of binary outcomes; NaN marks a missing cell.

    The array is stored as float64 with values in {0.0, 1.0, NaN} and is
    read-only after construction.
    """

    responses: np.ndarray
    person_ids: tuple = field(default=None)
    item_ids: tuple = field(default=None)

    def __post_init__(self):
        arr = np.asarray(self.responses, dtype=float)
        if arr.ndim != 2:
            raise DomainError("response matrix must be 2-dimensional")
        n, m = arr.shape
        if n < 2 or m < 2:
            raise DomainError("need at least 2 persons and 2 items")
        obs = ~np.isnan(arr)
        if not np.all(np.isin(arr[obs], (0.0, 1.0))):
            raise DomainError("responses must be 0, 1, or missing")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "responses", arr)
        pids = self.person_ids or tuple(f"P{i + 1}" for i in range(n))
        iids = self.item_ids or tuple(f"I{j + 1}" for j in range(m))
        pids, iids = tuple(map(str, pids)), tuple(map(str, iids))
        if len(pids) != n or len(iids) != m:
            raise DomainError("label count does not match matrix shape")
        if len(set(pids)) != n or len(set(iids)) != m:
            raise DomainError("labels must be unique within their axis")
        object.__setattr__(self, "person_ids", pids)
        object.__setattr__(self, "item_ids", iids)

    @property
    def n_persons(self) -> int:
        return self.responses.shape[0]

    @property
    def n_items(self) -> int:
        return self.responses.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.responses)

    def transposed(self, complement: bool = False) -> "ResponseMatrix":
        arr = self.responses.T
        if complement:
            arr = 1.0 - arr
        return ResponseMatrix(arr, self.item_ids, self.person_ids)


@dataclass(frozen=True)
class ParameterSet:
    """Fitted (or true) parameters; fixed discriminations hold sqrt(2)."""

    theta: np.ndarray
    beta: np.ndarray
    d_person: np.ndarray
    d_item: np.ndarray

    def __post_init__(self):
        for name in ("theta", "beta", "d_person", "d_item"):
            v = np.asarray(getattr(self, name), dtype=float).copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.d_person.shape != self.theta.shape:
            raise DomainError("d_person length must match theta")
        if self.d_item.shape != self.beta.shape:
            raise DomainError("d_item length must match beta")
        for d in (self.d_person, self.d_item):
            finite = d[np.isfinite(d)]
            if np.any(finite <= 0):
                raise DomainError("discriminations must be strictly positive")

    @classmethod
    def rasch(cls, theta, beta) -> "ParameterSet":
        theta = np.asarray(theta, dtype=float)
        beta = np.asarray(beta, dtype=float)
        return cls(theta, beta,
                   np.full(theta.shape, SQRT2), np.full(beta.shape, SQRT2))


def logistic(x):
    """Standard logistic function 1 / (1 + exp(-x)).

    Saturates smoothly in float64: for |x| beyond roughly 37 the result
    rounds to exactly 0.0 or 1.0; callers that need open-interval values
    should apply `clamp_probability`.
    """
    return expit(x)


def normal_cdf(x):
    """Standard normal CDF, accurate to well below 1e-10 absolute error."""
    return ndtr(x)


def link_eval(link: Link, x):
    return logistic(x) if link is Link.LOGISTIC else normal_cdf(x)


def link_pdf(link: Link, x):
    """Derivative of the link at x."""
    if link is Link.LOGISTIC:
        p = expit(x)
        return p * (1.0 - p)
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def clamp_probability(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def combined_discrimination(d_i, d_j):
    """Resultant discrimination d_i*d_j / sqrt(d_i^2 + d_j^2).

    Arises from adding the variances (1/d_i)^2 and (1/d_j)^2 of independent
    random fluctuations of person and item strength.  Symmetric; always
    below min(d_i, d_j); equals 1 when both arguments are sqrt(2).
    """
    d_i = np.asarray(d_i, dtype=float)
    d_j = np.asarray(d_j, dtype=float)
    if np.any(d_i <= 0) or np.any(d_j <= 0):
        raise DomainError("discriminations must be strictly positive")
    return d_i * d_j / np.hypot(d_i, d_j)


def effective_discrimination(spec: ModelSpec, d_person, d_item):
    """Per-cell d_s grid honouring the fixings of spec.kind.

    d_person / d_item may be scalars or vectors; the result broadcasts to
    an outer (person x item) grid when both are vectors.
    """
    d_i = np.asarray(d_person, dtype=float)
    d_j = np.asarray(d_item, dtype=float)
    if not spec.kind.frees_person_d:
        d_i = np.full_like(d_i, SQRT2)
    if not spec.kind.frees_item_d:
        d_j = np.full_like(d_j, SQRT2)
    if d_i.ndim == 1 and d_j.ndim == 1:
        return combined_discrimination(d_i[:, None], d_j[None, :])
    return combined_discrimination(d_i, d_j)


def success_probability(spec: ModelSpec, theta, beta, d_person=SQRT2,
                        d_item=SQRT2):
    """P(correct) = link(d_s * (theta - beta)) for the given model.

    Scalar or broadcastable array arguments are accepted.  Discriminations
    fixed by the model kind are forced to sqrt(2) regardless of the values
    passed.
    """
    d_s = effective_discrimination(spec, d_person, d_item)
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return link_eval(spec.link, d_s * (theta - beta))


def probability_matrix(spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    """Full persons x items success-probability grid, clamped for logs."""
    d_s = effective_discrimination(spec, params.d_person, params.d_item)
    eta = d_s * (params.theta[:, None] - params.beta[None, :])
    return clamp_probability(link_eval(spec.link, eta))
