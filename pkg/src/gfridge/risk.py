"""Closed-form finite-sample risks of gradient flow and ridge regression.

Estimation, in-sample and out-of-sample risk share one structure in the
eigenbasis of ``X^T X / n``: a bias factor and a variance factor per
eigenvalue, weighted by the flavor's covariance expressed in that basis
(identity, ``diag(s)`` or ``V^T Sigma V``). Everything here is
deterministic; Monte Carlo checks live in :mod:`gfridge.experiments`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InputError, SingularityError
from .estimators import FLOW_TIME, RIDGE_LAMBDA, TuningValue, as_tuning, flow_shrinkage, ridge_shrinkage
from .spectral import SpectralData, quadratic_weights

ESTIMATION = "estimation"
IN_SAMPLE = "in-sample"
OUT_OF_SAMPLE = "out-of-sample"
FLAVOR_KINDS = (ESTIMATION, IN_SAMPLE, OUT_OF_SAMPLE)

GRID_LO = 2.0**-10
GRID_HI = 2.0**10
GRID_N = 200


def log_grid(lo: float = GRID_LO, hi: float = GRID_HI, num: int = GRID_N) -> np.ndarray:
    """Tuning values equally spaced on the log scale, endpoints included."""
    if not (0 < lo <= hi) or num < 1:
        raise InputError(f"invalid grid lo={lo}, hi={hi}, n={num}")
    if num == 1:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, num)


@dataclass(frozen=True)
class PriorModel:
    """Noise level and spherical-prior signal strength for an ``n x p`` design."""

    sigma2: float
    r2: float
    n: int
    p: int

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InputError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.r2 > 0:
            raise InputError(f"r2 must be positive, got {self.r2}")
        if self.n < 1 or self.p < 1:
            raise InputError("dimensions must be positive")

    @property
    def alpha(self) -> float:
        return self.r2 * self.n / (self.sigma2 * self.p)

    @classmethod
    def for_spectrum(cls, sd: SpectralData, sigma2: float = 1.0, r2: float = 1.0) -> "PriorModel":
        return cls(sigma2=sigma2, r2=r2, n=sd.n, p=sd.p)


@dataclass(frozen=True)
class RiskFlavor:
    kind: str = ESTIMATION
    population_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in FLAVOR_KINDS:
            raise InputError(f"unknown risk flavor {self.kind!r}")
        cov = self.population_cov
        if cov is None:
            if self.kind == OUT_OF_SAMPLE:
                raise InputError("out-of-sample risk needs a population covariance")
            return
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise InputError("population covariance must be square")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise InputError("population covariance must be symmetric")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T))[0] < -1e-10 * scale:
            raise InputError("population covariance must be positive semidefinite")
        object.__setattr__(self, "population_cov", cov)

    @classmethod
    def out_of_sample(cls, cov) -> "RiskFlavor":
        return cls(OUT_OF_SAMPLE, cov)


@dataclass(frozen=True)
class RiskPoint:
    tuning: TuningValue
    bias_sq: float
    variance: float

    @property
    def total(self) -> float:
        return self.bias_sq + self.variance


@dataclass
class RiskCurve:
    estimator: str
    flavor: str
    points: list
    l2_norms: list = field(default_factory=list)
    calibration: str = "none"

    def __len__(self):
        return len(self.points)

    @property
    def tunings(self) -> np.ndarray:
        return np.array([pt.tuning.value for pt in self.points])

    @property
    def totals(self) -> np.ndarray:
        return np.array([pt.total for pt in self.points])

    def rows(self):
        """CSV-ready rows in the documented column order."""
        norms = self.l2_norms or [math.nan] * len(self.points)
        for pt, nrm in zip(self.points, norms):
            yield {
                "estimator": self.estimator,
                "flavor": self.flavor,
                "calibration": self.calibration,
                "tuning": pt.tuning.value,
                "bias_sq": pt.bias_sq,
                "variance": pt.variance,
                "total": pt.total,
                "l2_norm": math.sqrt(nrm) if nrm == nrm else math.nan,
            }


# -- per-eigenvalue factors --------------------------------------------------


def _check_estimator_tuning(sd: SpectralData, estimator: str, tuning) -> TuningValue:
    tv = as_tuning(estimator, tuning)
    if tv.kind == RIDGE_LAMBDA and tv.value == 0 and sd.rank_deficient:
        raise SingularityError("ridge risk at lambda = 0 is undefined for a rank-deficient design")
    return tv


def bias_factor(s: np.ndarray, estimator: str, value: float) -> np.ndarray:
    """Per-eigenvalue multiplier of ``v_i^T beta0`` in ``E[b_hat] - beta0``
    (up to sign): ``exp(-t s)`` or ``lam / (s + lam)``."""
    if math.isinf(value):
        # t = inf keeps only the null space; lam = inf keeps everything
        return (s == 0).astype(float) if estimator == "flow" else np.ones_like(s)
    if estimator == "flow":
        return np.exp(-value * s)
    denom = s + value
    out = np.ones_like(s)
    np.divide(value, denom, out=out, where=denom > 0)
    return out


def variance_factor(s: np.ndarray, estimator: str, value: float) -> np.ndarray:
    """``(1 - exp(-t s))^2 / s`` or ``s / (s + lam)^2``; zero at ``s = 0``."""
    nz = s > 0
    out = np.zeros_like(s)
    if estimator == "flow":
        g = flow_shrinkage(s[nz], value)
        out[nz] = g * g / s[nz]
    elif not math.isinf(value):
        out[nz] = s[nz] / (s[nz] + value) ** 2
    return out


def flavor_weights(sd: SpectralData, flavor: RiskFlavor, full: bool = False) -> np.ndarray:
    """Flavor covariance in the eigenbasis: its diagonal, or the full matrix."""
    s = sd.eigenvalues
    if flavor.kind == ESTIMATION:
        return np.eye(sd.p) if full else np.ones(sd.p)
    if flavor.kind == IN_SAMPLE:
        return np.diag(s) if full else s.copy()
    cov = flavor.population_cov
    if cov.shape != (sd.p, sd.p):
        raise InputError(f"population covariance has shape {cov.shape}, expected ({sd.p}, {sd.p})")
    if full:
        return quadratic_weights(sd, cov)
    V = sd.right_vectors
    return np.einsum("ij,ij->j", V, cov @ V)


def bayes_terms(sd, prior, estimator, tuning, flavor, weights=None):
    """Per-eigenvalue bias and variance summands of the Bayes risk.

    Returns ``(bias_terms, variance_terms)`` whose sums are the Bayes
    squared bias and variance.
    """
    tv = _check_estimator_tuning(sd, estimator, tuning)
    w = flavor_weights(sd, flavor) if weights is None else weights
    s = sd.eigenvalues
    b = bias_factor(s, estimator, tv.value)
    scale = prior.sigma2 / sd.n
    bias = scale * prior.alpha * b * b * w
    var = scale * variance_factor(s, estimator, tv.value) * w
    return bias, var


def fixed_terms(sd, beta0, prior, estimator, tuning, flavor):
    """Per-eigenvalue bias and variance summands for a fixed ``beta0``.

    Only estimation and in-sample flavors are diagonal in the eigenbasis.
    """
    if flavor.kind == OUT_OF_SAMPLE:
        raise InputError("out-of-sample fixed-beta0 risk has no termwise decomposition")
    tv = _check_estimator_tuning(sd, estimator, tuning)
    c = sd.right_vectors.T @ _check_beta(sd, beta0)
    s = sd.eigenvalues
    w = flavor_weights(sd, flavor)
    b = bias_factor(s, estimator, tv.value)
    bias = (b * c) ** 2 * w
    var = prior.sigma2 / sd.n * variance_factor(s, estimator, tv.value) * w
    return bias, var


def _check_beta(sd: SpectralData, beta0) -> np.ndarray:
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    if beta0.size != sd.p:
        raise InputError(f"beta0 has length {beta0.size}, expected p = {sd.p}")
    if not np.all(np.isfinite(beta0)):
        raise InputError("beta0 has non-finite entries")
    return beta0


# -- risks ---------------------------------------------------------------------


def risk_fixed(sd, beta0, prior, estimator, tuning, flavor=RiskFlavor()) -> RiskPoint:
    """Risk at a fixed coefficient vector ``beta0``.

    Out-of-sample bias uses the full quadratic form
    ``beta0^T B Sigma B beta0`` with ``B`` the bias matrix.
    """
    tv = _check_estimator_tuning(sd, estimator, tuning)
    if flavor.kind != OUT_OF_SAMPLE:
        bias, var = fixed_terms(sd, beta0, prior, estimator, tv, flavor)
        return RiskPoint(tv, float(np.sum(bias)), float(np.sum(var)))
    c = sd.right_vectors.T @ _check_beta(sd, beta0)
    s = sd.eigenvalues
    W = flavor_weights(sd, flavor, full=True)
    d = bias_factor(s, estimator, tv.value) * c
    bias_sq = float(d @ W @ d)
    var = prior.sigma2 / sd.n * float(np.sum(variance_factor(s, estimator, tv.value) * np.diag(W)))
    return RiskPoint(tv, max(bias_sq, 0.0), var)


def risk_bayes(sd, prior, estimator, tuning, flavor=RiskFlavor(), weights=None) -> RiskPoint:
    """Bayes risk under the spherical prior ``beta0 ~ (0, (r2/p) I)``."""
    tv = _check_estimator_tuning(sd, estimator, tuning)
    bias, var = bayes_terms(sd, prior, estimator, tv, flavor, weights)
    return RiskPoint(tv, float(np.sum(bias)), float(np.sum(var)))


def expected_l2_norm_sq(sd, prior, estimator, tuning, beta0=None) -> float:
    """``E ||b_hat||^2`` under the prior, or given a fixed ``beta0``.

    With ``g`` the shrinkage map the Bayes value is
    ``(sigma2/n) sum g(s_i)^2 (alpha + 1/s_i)``, zero-eigenvalue terms dropped.
    """
    tv = _check_estimator_tuning(sd, estimator, tuning)
    s = sd.eigenvalues
    nz = s > 0
    g = (flow_shrinkage if estimator == "flow" else ridge_shrinkage)(s[nz], tv.value)
    g2 = g * g
    var = prior.sigma2 / sd.n * float(np.sum(g2 / s[nz]))
    if beta0 is None:
        return prior.sigma2 / sd.n * prior.alpha * float(np.sum(g2)) + var
    c = sd.right_vectors.T @ _check_beta(sd, beta0)
    return float(np.sum(g2 * c[nz] ** 2)) + var


def ridge_optimal_lambda(prior: PriorModel) -> TuningValue:
    """Bayes-optimal ridge tuning ``1/alpha`` (every flavor)."""
    return TuningValue(RIDGE_LAMBDA, 1.0 / prior.alpha)


def flow_optimal_t(sd, prior, flavor=RiskFlavor(), grid=None, rtol: float = 1e-6) -> TuningValue:
    """Minimize the gradient flow Bayes risk over ``t``.

    Scans ``grid`` (default: 200 log-spaced points on ``[2^-10, 2^10]``)
    together with ``t = alpha``, then refines by golden-section search on the
    bracket formed by the best candidate's neighbors. Unimodality is not
    known, so the result is a certified grid-local optimum.
    """
    w = flavor_weights(sd, flavor)
    cand = np.unique(np.append(log_grid() if grid is None else np.asarray(grid, float), prior.alpha))

    def f(t):
        if t <= 0:
            return math.inf
        return risk_bayes(sd, prior, "flow", t, flavor, weights=w).total

    vals = np.array([f(t) for t in cand])
    i = int(np.argmin(vals))
    best_t, best_v = float(cand[i]), float(vals[i])
    if 0 < i < len(cand) - 1:
        try:
            res = minimize_scalar(
                f, bracket=(cand[i - 1], cand[i], cand[i + 1]), method="golden", tol=rtol
            )
            if res.fun <= best_v:
                best_t = float(res.x)
        except ValueError:
            # flat bracket: the grid argmin stands
            pass
    return TuningValue(FLOW_TIME, best_t)


def risk_curve(
    sd,
    prior,
    estimator: str,
    grid: Sequence,
    flavor=RiskFlavor(),
    beta0=None,
    calibration: str = "none",
) -> RiskCurve:
    """Evaluate the risk at every grid value, preserving grid order.

    Bayes risk by default; fixed-``beta0`` risk when ``beta0`` is given.
    """
    if len(grid) == 0:
        raise InputError("tuning grid is empty")
    tunings = [as_tuning(estimator, g) for g in grid]
    vals = np.array([tv.value for tv in tunings])
    d = np.diff(vals)
    if not (np.all(d >= 0) or np.all(d <= 0)):
        raise InputError("tuning grid must be sorted")
    w = flavor_weights(sd, flavor) if beta0 is None else None
    points, norms = [], []
    for tv in tunings:
        if beta0 is None:
            points.append(risk_bayes(sd, prior, estimator, tv, flavor, weights=w))
        else:
            points.append(risk_fixed(sd, beta0, prior, estimator, tv, flavor))
        norms.append(expected_l2_norm_sq(sd, prior, estimator, tv, beta0))
    return RiskCurve(estimator, flavor.kind, points, norms, calibration)
