"""Synthetic designs, the Monte Carlo risk oracle, l2-norm calibration and
the finite-sample vs. asymptotic comparison runs.

Seeding: the design for a config is drawn from
``np.random.default_rng(config.seed)``. Monte Carlo replicates are split
into fixed-size batches; batch ``j`` uses child ``j`` of
``np.random.SeedSequence(seed).spawn(n_batches)``, and batch statistics are
combined in batch order, so results do not depend on how batches are
scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .asymptotics import MPLaw, limiting_rows
from .errors import InputError
from .estimators import as_tuning
from .risk import (
    ESTIMATION,
    FLAVOR_KINDS,
    IN_SAMPLE,
    OUT_OF_SAMPLE,
    PriorModel,
    RiskCurve,
    RiskFlavor,
    log_grid,
    risk_bayes,
    risk_curve,
    flavor_weights,
)
from .spectral import SpectralData, decompose

DISTRIBUTIONS = ("gaussian", "student-t3", "bernoulli-half")
MC_BATCH = 10_000


@dataclass(frozen=True)
class ExperimentConfig:
    dist: str = "gaussian"
    n: int = 500
    p: int = 1000
    rho: float = 0.0
    sigma2: float = 1.0
    r2: float = 1.0
    seed: int = 0
    flavor: str = ESTIMATION
    grid_lo: float = 2.0**-10
    grid_hi: float = 2.0**10
    grid_n: int = 200

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise InputError(f"unknown distribution {self.dist!r}; expected one of {DISTRIBUTIONS}")
        if self.n < 1 or self.p < 1:
            raise InputError("n and p must be positive")
        if not (-1 / max(self.p - 1, 1) <= self.rho < 1):
            raise InputError(f"equicorrelation rho={self.rho} does not give a PSD covariance")
        if self.flavor not in FLAVOR_KINDS:
            raise InputError(f"unknown risk flavor {self.flavor!r}")

    @property
    def grid(self) -> np.ndarray:
        return log_grid(self.grid_lo, self.grid_hi, self.grid_n)

    def population_cov(self) -> np.ndarray:
        return equicorrelation_cov(self.p, self.rho)

    def risk_flavor(self) -> RiskFlavor:
        if self.flavor == OUT_OF_SAMPLE:
            return RiskFlavor(OUT_OF_SAMPLE, self.population_cov())
        return RiskFlavor(self.flavor)

    def prior(self) -> PriorModel:
        return PriorModel(self.sigma2, self.r2, self.n, self.p)


def equicorrelation_cov(p: int, rho: float) -> np.ndarray:
    return (1 - rho) * np.eye(p) + rho * np.ones((p, p))


def equicorrelation_sqrt(p: int, rho: float) -> np.ndarray:
    """Symmetric square root of the unit-diagonal equicorrelation matrix.

    The matrix is ``(1 - rho) I + rho 11^T`` with eigenvalue ``1 + (p-1) rho``
    on ``1`` and ``1 - rho`` elsewhere, so its root is a rank-one update of a
    scaled identity.
    """
    base = math.sqrt(1 - rho)
    top = math.sqrt(1 + (p - 1) * rho)
    return base * np.eye(p) + ((top - base) / p) * np.ones((p, p))


def draw_entries(rng: np.random.Generator, dist: str, shape) -> np.ndarray:
    """I.i.d. entries with mean 0 and variance 1."""
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "student-t3":
        return rng.standard_t(3, shape) / math.sqrt(3.0)
    if dist == "bernoulli-half":
        return 2.0 * rng.integers(0, 2, shape) - 1.0
    raise InputError(f"unknown distribution {dist!r}")


def generate_design(config: ExperimentConfig) -> np.ndarray:
    """``X = Z Sigma^{1/2}``: rows are observations with covariance ``Sigma``."""
    rng = np.random.default_rng(config.seed)
    Z = draw_entries(rng, config.dist, (config.n, config.p))
    if config.rho == 0:
        return Z
    return Z @ equicorrelation_sqrt(config.p, config.rho)


# -- Monte Carlo oracle ------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    reps: int

    def agrees(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


def _linear_map(X: np.ndarray, estimator: str, value: float) -> np.ndarray:
    """``A`` with ``b_hat = A y``, built with dense linear algebra only."""
    n, p = X.shape
    G = X.T @ X
    if estimator == "ridge":
        if math.isinf(value):
            return np.zeros((p, n))
        return np.linalg.solve(G + n * value * np.eye(p), X.T)
    if math.isinf(value):
        return np.linalg.pinv(X)
    return np.linalg.pinv(G, hermitian=True) @ (np.eye(p) - scipy.linalg.expm(-value * G / n)) @ X.T


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(0.5 * (cov + cov.T))
    return (Q * np.sqrt(np.clip(w, 0, None))) @ Q.T


def monte_carlo_risk(
    X,
    sigma2: float,
    estimator: str,
    tuning,
    flavor: RiskFlavor = RiskFlavor(),
    reps: int = 100_000,
    seed: int = 0,
    beta0=None,
    r2: Optional[float] = None,
    batch: int = MC_BATCH,
) -> MonteCarloEstimate:
    """Estimate a risk by simulation.

    Draws ``y = X beta0 + sigma eps`` with Gaussian noise; ``beta0`` is fixed
    if given, otherwise drawn from ``N(0, (r2/p) I)``. Out-of-sample loss
    draws a fresh ``x0 ~ N(0, Sigma)`` per replicate.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if reps < 100:
        raise InputError("need at least 100 replicates")
    if sigma2 < 0:
        raise InputError("sigma2 must be nonnegative")
    if beta0 is None and r2 is None:
        raise InputError("give either a fixed beta0 or a prior strength r2")
    tv = as_tuning(estimator, tuning)
    A = _linear_map(X, estimator, tv.value)
    sigma = math.sqrt(sigma2)
    root = _psd_sqrt(flavor.population_cov) if flavor.kind == OUT_OF_SAMPLE else None
    fixed = None if beta0 is None else np.asarray(beta0, dtype=float).reshape(1, p)

    sizes = [batch] * (reps // batch) + ([reps % batch] if reps % batch else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    count, mean, m2 = 0, 0.0, 0.0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        if fixed is None:
            beta = rng.standard_normal((size, p)) * math.sqrt(r2 / p)
        else:
            beta = np.broadcast_to(fixed, (size, p))
        y = beta @ X.T + sigma * rng.standard_normal((size, n))
        diff = y @ A.T - beta
        if flavor.kind == ESTIMATION:
            loss = np.sum(diff * diff, axis=1)
        elif flavor.kind == IN_SAMPLE:
            fit = diff @ X.T
            loss = np.sum(fit * fit, axis=1) / n
        else:
            x0 = rng.standard_normal((size, p)) @ root
            loss = np.sum(x0 * diff, axis=1) ** 2
        # Chan et al. pairwise combination of batch mean and M2
        b_mean = float(np.mean(loss))
        b_m2 = float(np.sum((loss - b_mean) ** 2))
        tot = count + size
        delta = b_mean - mean
        mean += delta * size / tot
        m2 += b_m2 + delta * delta * count * size / tot
        count = tot
    var = m2 / (count - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / count), count)


# -- l2-norm calibration ------------------------------------------------------------


@dataclass
class CalibratedRow:
    t: float
    lam: float
    l2_norm: float
    risk_flow: float
    risk_ridge: float
    ratio: float
    matched: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in ("t", "lambda", "l2_norm", "risk_flow", "risk_ridge", "ratio", "matched")}


def _ridge_norms(s: np.ndarray, lam: np.ndarray, prior: PriorModel, n: int) -> np.ndarray:
    """Expected squared ridge norm for each entry of ``lam`` (nonzero ``s`` only)."""
    num = prior.alpha * s * s + s
    return prior.sigma2 / n * np.sum(num[None, :] / (s[None, :] + lam[:, None]) ** 2, axis=1)


def match_ridge_lambda(sd: SpectralData, prior: PriorModel, targets, rtol: float = 1e-10, max_iter: int = 400):
    """Find ``lam`` with ``E||ridge(lam)||^2 = target`` for each target.

    The ridge norm is strictly decreasing in ``lam``, so bisection on
    ``log lam`` converges. Targets at or above the ``lam -> 0`` supremum come
    back as ``nan`` with ``matched = False``; a zero target maps to ``inf``.
    """
    targets = np.asarray(targets, dtype=float)
    s = sd.eigenvalues[sd.eigenvalues > 0]
    lam = np.full(targets.shape, np.nan)
    matched = np.zeros(targets.shape, dtype=bool)
    zero = targets <= 0
    lam[zero] = math.inf
    matched[zero] = True
    todo = ~zero
    if not np.any(todo) or s.size == 0:
        return lam, matched
    tg = targets[todo]
    lo = np.full(tg.shape, -60.0 * math.log(10))
    hi = np.full(tg.shape, 60.0 * math.log(10))
    ok = _ridge_norms(s, np.exp(lo), prior, sd.n) > tg
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        above = _ridge_norms(s, np.exp(mid), prior, sd.n) > tg
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        val = _ridge_norms(s, np.exp(0.5 * (lo + hi)), prior, sd.n)
        if np.all(np.abs(val - tg) <= rtol * tg) or np.all(hi - lo < 1e-15):
            break
    mid = 0.5 * (lo + hi)
    val = _ridge_norms(s, np.exp(mid), prior, sd.n)
    good = ok & (np.abs(val - tg) <= rtol * tg)
    out = np.where(good, np.exp(mid), np.nan)
    lam[todo] = out
    matched[todo] = good
    return lam, matched


def calibrate_by_l2(curve_flow: RiskCurve, sd: SpectralData, prior: PriorModel, flavor: RiskFlavor) -> list:
    """Pair each flow time with the ridge ``lam`` of equal expected squared norm."""
    if not curve_flow.l2_norms:
        raise InputError("flow curve carries no l2 norms")
    targets = np.asarray(curve_flow.l2_norms, dtype=float)
    lams, matched = match_ridge_lambda(sd, prior, targets)
    w = flavor_weights(sd, flavor)
    rows = []
    for pt, target, lam, ok in zip(curve_flow.points, targets, lams, matched):
        rf = pt.total
        if ok:
            rr = risk_bayes(sd, prior, "ridge", float(lam), flavor, weights=w).total
            ratio = rf / rr
        else:
            rr = ratio = math.nan
        rows.append(CalibratedRow(pt.tuning.value, float(lam), math.sqrt(target), rf, rr, ratio, bool(ok)))
    return rows


# -- experiment runs -------------------------------------------------------------


@dataclass
class RatioSummary:
    max_pathwise_ratio: float
    ratio_of_minima: float
    max_l2calibrated_ratio: float
    config: ExperimentConfig

    def to_json(self) -> dict:
        return {
            "max_pathwise_ratio": self.max_pathwise_ratio,
            "ratio_of_minima": self.ratio_of_minima,
            "max_l2calibrated_ratio": self.max_l2calibrated_ratio,
            "config": asdict(self.config),
        }


@dataclass
class ExperimentResult:
    summary: RatioSummary
    flow: RiskCurve
    ridge: RiskCurve
    calibrated: list
    limits: list = field(default_factory=list)

    def inverse_rows(self) -> list:
        rows = list(self.flow.rows()) + list(self.ridge.rows())
        rows += [dict(r, calibration="inverse") for r in self.limits]
        return rows

    def l2_rows(self) -> list:
        flavor = self.flow.flavor
        rows = [dict(r, calibration="l2") for r in self.flow.rows()]
        for row in self.calibrated:
            rows.append(
                {
                    "estimator": "ridge",
                    "flavor": flavor,
                    "calibration": "l2",
                    "tuning": row.lam,
                    "bias_sq": math.nan,
                    "variance": math.nan,
                    "total": row.risk_ridge,
                    "l2_norm": row.l2_norm if row.matched else math.nan,
                }
            )
        rows += [dict(r, calibration="l2") for r in self.limits]
        return rows


def _inverse(grid):
    return [math.inf if t == 0 else 1.0 / t for t in grid]


def run_on_design(X, config: ExperimentConfig, with_limits: Optional[bool] = None, grid=None) -> ExperimentResult:
    """As :func:`run_experiment` on a given design; ``grid`` overrides the
    config's flow-time grid (any sorted order)."""
    sd = decompose(X)
    prior = config.prior()
    flavor = config.risk_flavor()
    grid = config.grid if grid is None else np.asarray(grid, dtype=float)
    flow = risk_curve(sd, prior, "flow", grid, flavor, calibration="inverse")
    ridge = risk_curve(sd, prior, "ridge", _inverse(grid), flavor, calibration="inverse")
    f_tot, r_tot = flow.totals, ridge.totals
    calibrated = calibrate_by_l2(flow, sd, prior, flavor)
    l2_ratios = [row.ratio for row in calibrated if row.matched]
    summary = RatioSummary(
        max_pathwise_ratio=float(np.max(f_tot / r_tot)),
        ratio_of_minima=float(np.min(f_tot) / np.min(r_tot)),
        max_l2calibrated_ratio=float(np.max(l2_ratios)) if l2_ratios else math.nan,
        config=config,
    )
    limits = []
    if with_limits is None:
        with_limits = config.rho == 0
    if with_limits:
        law = MPLaw(config.p / config.n)
        alpha0 = config.r2 / (config.sigma2 * law.gamma)
        kind = ESTIMATION if config.flavor == OUT_OF_SAMPLE else config.flavor
        for est, tunings in (("flow", grid), ("ridge", _inverse(grid))):
            for row in limiting_rows(law, alpha0, config.sigma2, est, tunings, kind):
                limits.append(dict(row, flavor=config.flavor))
    return ExperimentResult(summary, flow, ridge, calibrated, limits)


def run_experiment(config: ExperimentConfig, with_limits: Optional[bool] = None) -> ExperimentResult:
    """Finite-sample Bayes risk curves for both estimators under both
    calibrations, with MP overlays when ``Sigma = I``."""
    return run_on_design(generate_design(config), config, with_limits)


def run_seeds(config: ExperimentConfig, seeds, threads: int = 1, with_limits: bool = False) -> list:
    """Run ``config`` once per seed; results come back in seed order."""
    configs = [replace(config, seed=int(s)) for s in seeds]
    if threads <= 1:
        return [run_experiment(c, with_limits) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: run_experiment(c, with_limits), configs))


def supplement_configs(seed: int = 0, flavors=(ESTIMATION, OUT_OF_SAMPLE)) -> list:
    """The 12 design configurations (3 distributions x 2 rho x 2 shapes),
    one entry per requested risk flavor."""
    out = []
    for dist in DISTRIBUTIONS:
        for rho in (0.0, 0.5):
            for n, p in ((1000, 500), (500, 1000)):
                for fl in flavors:
                    out.append(ExperimentConfig(dist=dist, n=n, p=p, rho=rho, seed=seed, flavor=fl))
    return out
