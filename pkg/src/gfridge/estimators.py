"""Ridge and gradient-flow paths, gradient descent, shrinkage maps and
implicit regularizers.

All closed forms go through :class:`~gfridge.spectral.SpectralData`. The
gradient descent path is the one place that iterates on ``X`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, PreconditionError, SingularityError
from .spectral import SpectralData, _as_design

RIDGE_LAMBDA = "ridge-lambda"
FLOW_TIME = "flow-time"
DESCENT_STEPS = "descent-step-count"
TUNING_KINDS = (RIDGE_LAMBDA, FLOW_TIME, DESCENT_STEPS)

ESTIMATOR_KIND = {"ridge": RIDGE_LAMBDA, "flow": FLOW_TIME}


@dataclass(frozen=True)
class TuningValue:
    """A tuning parameter tagged with what it tunes.

    ``flow-time`` may be ``inf`` (the min-norm least squares limit);
    ``ridge-lambda`` may be ``inf`` (the null estimator).
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in TUNING_KINDS:
            raise InputError(f"unknown tuning kind {self.kind!r}")
        v = float(self.value)
        if math.isnan(v) or v < 0:
            raise InputError(f"{self.kind} must be nonnegative, got {self.value}")
        if self.kind == DESCENT_STEPS and (math.isinf(v) or v != int(v)):
            raise InputError(f"step count must be a nonnegative integer, got {self.value}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


def as_tuning(estimator: str, tuning) -> TuningValue:
    """Coerce a float or TuningValue to the tuning kind of ``estimator``."""
    try:
        kind = ESTIMATOR_KIND[estimator]
    except KeyError:
        raise InputError(f"unknown estimator {estimator!r}; expected 'flow' or 'ridge'") from None
    if isinstance(tuning, TuningValue):
        if tuning.kind != kind:
            raise InputError(f"{estimator} needs a {kind} tuning value, got {tuning.kind}")
        return tuning
    return TuningValue(kind, tuning)


@dataclass
class DescentPath:
    step_size: float
    iterates: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    def as_array(self) -> np.ndarray:
        return np.vstack(self.iterates)


# -- shrinkage factors -------------------------------------------------------


def flow_shrinkage(s, t: float) -> np.ndarray:
    """``1 - exp(-t s)``; equals 1 on ``s > 0`` and 0 on ``s = 0`` at ``t = inf``."""
    s = np.asarray(s, dtype=float)
    if math.isinf(t):
        return (s > 0).astype(float)
    return -np.expm1(-t * s)


def ridge_shrinkage(s, lam: float) -> np.ndarray:
    """``s / (s + lam)`` with ``0/0 := 0`` and ``lam = inf`` giving 0."""
    s = np.asarray(s, dtype=float)
    if math.isinf(lam):
        return np.zeros_like(s)
    denom = s + lam
    out = np.zeros_like(s)
    np.divide(s, denom, out=out, where=denom > 0)
    return out


def shrinkage_map(kind: str, s, kappa):
    """Spectral shrinkage map ``g(s, kappa)`` for ``kind`` in {'ridge', 'flow'}."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise InputError("eigenvalue must be nonnegative")
    if not kappa >= 0:
        raise InputError(f"tuning must be nonnegative, got {kappa}")
    if kind == "ridge":
        out = ridge_shrinkage(s_arr, float(kappa))
    elif kind == "flow":
        out = flow_shrinkage(s_arr, float(kappa))
    else:
        raise InputError(f"unknown shrinkage kind {kind!r}")
    return float(out) if np.ndim(s) == 0 else out


# -- estimators ----------------------------------------------------------------


def _check_response(sd: SpectralData, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != sd.n:
        raise InputError(f"response has length {y.size}, expected n = {sd.n}")
    if not np.all(np.isfinite(y)):
        raise InputError("response has non-finite entries")
    return y


def _from_left(sd: SpectralData, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """``V[:, :m] diag(coef) U^T y`` where ``coef`` has length ``m``."""
    m = sd.m
    return sd.right_vectors[:, :m] @ (coef * (sd.left_vectors.T @ y))


def ridge_solution(sd: SpectralData, y, lam: float) -> np.ndarray:
    """``(X^T X + n lam I)^{-1} X^T y`` via the SVD of ``X``.

    ``lam = 0`` is allowed only for a full-rank ``X^T X / n``.
    """
    y = _check_response(sd, y)
    lam = float(lam)
    if not lam >= 0:
        raise InputError(f"ridge lambda must be nonnegative, got {lam}")
    if lam == 0 and sd.rank_deficient:
        raise SingularityError("ridge with lambda = 0 is undefined for a rank-deficient design")
    if math.isinf(lam):
        return np.zeros(sd.p)
    s = sd.eigenvalues[: sd.m]
    coef = np.zeros_like(s)
    nz = (s + lam) > 0
    coef[nz] = np.sqrt(s[nz]) / (np.sqrt(sd.n) * (s[nz] + lam))
    return _from_left(sd, y, coef)


def gradient_flow_solution(sd: SpectralData, y, t: float) -> np.ndarray:
    """Exact gradient flow iterate ``(X^T X)^+ (I - exp(-t X^T X/n)) X^T y``.

    ``t = inf`` returns the minimum-norm least squares solution.
    """
    y = _check_response(sd, y)
    t = float(t)
    if not t >= 0:
        raise InputError(f"flow time must be nonnegative, got {t}")
    s = sd.eigenvalues[: sd.m]
    coef = np.zeros_like(s)
    nz = s > 0
    coef[nz] = flow_shrinkage(s[nz], t) / (np.sqrt(sd.n) * np.sqrt(s[nz]))
    return _from_left(sd, y, coef)


def estimator_solution(sd: SpectralData, y, estimator: str, tuning) -> np.ndarray:
    tv = as_tuning(estimator, tuning)
    if estimator == "ridge":
        return ridge_solution(sd, y, tv.value)
    return gradient_flow_solution(sd, y, tv.value)


def fitted_values(sd: SpectralData, y, estimator: str, tuning) -> np.ndarray:
    """Linear-smoother form ``sum_i g(s_i, kappa) u_i u_i^T y``."""
    y = _check_response(sd, y)
    tv = as_tuning(estimator, tuning)
    s = sd.eigenvalues[: sd.m]
    g = shrinkage_map(estimator, s, tv.value)
    U = sd.left_vectors
    return U @ (g * (U.T @ y))


def gradient_descent_path(X, y, step_size: float, steps: int) -> DescentPath:
    """Run ``steps`` iterations of gradient descent on ``(1/2n)||y - X b||^2``
    from ``b = 0`` and return every iterate.

    Divergence for large step sizes is not guarded against.
    """
    X = _as_design(X)
    n, p = X.shape
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != n:
        raise InputError(f"response has length {y.size}, expected n = {n}")
    if not step_size > 0:
        raise InputError(f"step size must be positive, got {step_size}")
    if steps < 1:
        raise InputError(f"need at least one step, got {steps}")
    h = step_size / n
    beta = np.zeros(p)
    iterates = [beta]
    for _ in range(int(steps)):
        beta = beta + h * (X.T @ (y - X @ beta))
        iterates.append(beta)
    return DescentPath(step_size=float(step_size), iterates=iterates)


def discretization_bound(sd: SpectralData, y, step_size: float, steps: int) -> float:
    """Uniform bound on ``max_k |b^(k) - b_gf(k eps)|`` for ``eps < 1/s_max``."""
    y = _check_response(sd, y)
    if not step_size > 0:
        raise InputError(f"step size must be positive, got {step_size}")
    if step_size * sd.s_max >= 1:
        raise PreconditionError(
            f"step size {step_size} is not below 1/s_max = {1 / sd.s_max if sd.s_max else math.inf}"
        )
    s = sd.eigenvalues[: sd.m]
    # ||X^T y|| = sqrt(n) ||diag(sqrt(s)) U^T y||
    xty = np.sqrt(sd.n) * np.linalg.norm(np.sqrt(s) * (sd.left_vectors.T @ y))
    return float(step_size * xty / (2 * sd.n) * math.expm1(steps * step_size * sd.s_max))


# -- implicit regularizers ---------------------------------------------------


def _inv_expm1_pos(x: np.ndarray) -> np.ndarray:
    """``1 / (exp(x) - 1)`` for ``x > 0`` without overflow or cancellation."""
    return np.exp(-x) / -np.expm1(-x)


def implicit_regularizer_values(sd: SpectralData, kind: str, kappa, step_size=None) -> np.ndarray:
    """Eigenvalues of ``Q_t`` (flow) or ``Q_k`` (descent); zero on the null space."""
    s = sd.eigenvalues
    nz = s > 0
    q = np.zeros_like(s)
    if kind == "flow":
        t = float(kappa)
        if not t > 0:
            raise InputError("implicit regularizer needs t > 0")
        if math.isinf(t):
            return q
        q[nz] = s[nz] * _inv_expm1_pos(t * s[nz])
    elif kind == "descent":
        k = kappa
        if int(k) != k or k < 1:
            raise InputError("implicit regularizer needs an integer step count k >= 1")
        if step_size is None or not step_size > 0:
            raise InputError("descent regularizer needs a positive step size")
        if step_size * sd.s_max >= 1:
            raise PreconditionError(f"step size {step_size} is not below 1/s_max")
        # (1 - eps s)^{-k} - 1 = exp(x) - 1 with x = -k log1p(-eps s) > 0
        x = -int(k) * np.log1p(-step_size * s[nz])
        q[nz] = s[nz] * _inv_expm1_pos(x)
    else:
        raise InputError(f"unknown regularizer kind {kind!r}")
    return q


def implicit_regularizer(sd: SpectralData, kind: str, kappa, step_size=None) -> np.ndarray:
    """The PSD matrix ``Q`` for which ``argmin (1/n)||y - Xb||^2 + b^T Q b``
    is the flow (``kind='flow'``, ``kappa=t``) or descent
    (``kind='descent'``, ``kappa=k``) iterate.
    """
    q = implicit_regularizer_values(sd, kind, kappa, step_size)
    V = sd.right_vectors
    out = (V * q) @ V.T
    return 0.5 * (out + out.T)
