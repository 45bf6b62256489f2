"""Marchenko-Pastur limits of the Bayes risks for an identity covariance.

The MP law with aspect ratio ``gamma = p/n`` has density
``sqrt((b - s)(s - a)) / (2 pi gamma s)`` on ``[a, b]``,
``a, b = (1 -+ sqrt(gamma))^2``, and an atom of mass ``1 - 1/gamma`` at zero
when ``gamma > 1``. Integrals against it use the substitution
``s = a + (b - a) sin^2(theta)``, which cancels the square-root edge
behaviour and leaves a smooth integrand for composite Gauss-Legendre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, InputError, NumericError, SingularityError
from .estimators import as_tuning, flow_shrinkage, ridge_shrinkage
from .risk import ESTIMATION, IN_SAMPLE, OUT_OF_SAMPLE

DEFAULT_NODES = 2048
PANEL_ORDER = 32
TRANSFORM_TOL = 1e-10


@dataclass(frozen=True)
class MPLaw:
    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise InputError(f"aspect ratio must be positive, got {self.gamma}")

    @property
    def a(self) -> float:
        return (1 - math.sqrt(self.gamma)) ** 2

    @property
    def b(self) -> float:
        return (1 + math.sqrt(self.gamma)) ** 2

    @property
    def point_mass_zero(self) -> float:
        return max(0.0, 1 - 1 / self.gamma)


def mp_density(law: MPLaw, s):
    """Density of the continuous part; 0 outside ``(a, b)``. The atom at
    zero is never folded in."""
    s_arr = np.asarray(s, dtype=float)
    a, b = law.a, law.b
    inside = (s_arr > a) & (s_arr < b) & (s_arr > 0)
    out = np.zeros_like(s_arr)
    si = s_arr[inside]
    out[inside] = np.sqrt((b - si) * (si - a)) / (2 * math.pi * law.gamma * si)
    return float(out) if np.ndim(s) == 0 else out


@lru_cache(maxsize=64)
def _nodes(gamma: float, nodes: int):
    law = MPLaw(gamma)
    panels = max(1, nodes // PANEL_ORDER)
    x, w = np.polynomial.legendre.leggauss(PANEL_ORDER)
    edges = np.linspace(0.0, math.pi / 2, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    theta = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    a, b = law.a, law.b
    s = a + (b - a) * np.sin(theta) ** 2
    # density * ds/dtheta = (b - a)^2 sin^2(2 theta) / (4 pi gamma s)
    weights = wt * (b - a) ** 2 * np.sin(2 * theta) ** 2 / (4 * math.pi * gamma * s)
    s.setflags(write=False)
    weights.setflags(write=False)
    return s, weights


def mp_integrate(law: MPLaw, h, nodes: int = DEFAULT_NODES) -> float:
    """``integral h dF_gamma``: atom at zero plus the continuous part.

    ``h`` is called on an array of support points (and on ``array([0.])``
    when the law has an atom) and must apply any ``s = 0`` convention itself.
    """
    s, w = _nodes(law.gamma, int(nodes))
    vals = np.asarray(h(s), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericError("integrand is not finite on the MP support")
    total = float(np.dot(w, vals))
    pm = law.point_mass_zero
    if pm > 0:
        h0 = float(np.asarray(h(np.zeros(1)), dtype=float).reshape(-1)[0])
        if not math.isfinite(h0):
            raise NumericError("integrand is not finite at the atom s = 0")
        total += pm * h0
    return total


# -- integrands ------------------------------------------------------------------


def _safe_ratio(num, s):
    out = np.zeros_like(s)
    np.divide(num, s, out=out, where=s > 0)
    return out


def _flavor_weight(s, flavor: str):
    if flavor == IN_SAMPLE:
        return s
    if flavor in (ESTIMATION, OUT_OF_SAMPLE):
        return np.ones_like(s)
    raise InputError(f"unknown risk flavor {flavor!r}")


def _bayes_integrands(estimator: str, value: float, alpha0: float, flavor: str):
    if estimator == "flow":
        t = value

        def bias(s):
            b = (s == 0).astype(float) if math.isinf(t) else np.exp(-t * s)
            return alpha0 * b * b * _flavor_weight(s, flavor)

        def var(s):
            g = flow_shrinkage(s, t)
            return _safe_ratio(g * g, s) * _flavor_weight(s, flavor)

    else:
        lam = value

        def bias(s):
            if math.isinf(lam):
                return alpha0 * _flavor_weight(s, flavor)
            return alpha0 * (lam / (s + lam)) ** 2 * _flavor_weight(s, flavor)

        def var(s):
            if math.isinf(lam):
                return np.zeros_like(s)
            return _safe_ratio(s, (s + lam) ** 2) * _flavor_weight(s, flavor)

    return bias, var


def limiting_bayes_components(law, alpha0, sigma2, estimator, tuning, flavor=ESTIMATION, nodes=DEFAULT_NODES):
    """Limiting ``(bias, variance)`` of the Bayes risk."""
    tv = as_tuning(estimator, tuning)
    if not alpha0 > 0:
        raise InputError("alpha0 must be positive")
    if estimator == "ridge" and tv.value == 0 and law.point_mass_zero > 0:
        raise SingularityError("ridge at lambda = 0 is undefined when gamma > 1")
    bias_h, var_h = _bayes_integrands(estimator, tv.value, alpha0, flavor)
    scale = sigma2 * law.gamma
    return scale * mp_integrate(law, bias_h, nodes), scale * mp_integrate(law, var_h, nodes)


def limiting_bayes_risk(law, alpha0, sigma2, estimator, tuning, flavor=ESTIMATION, nodes=DEFAULT_NODES) -> float:
    """Almost-sure limit of the Bayes risk as ``p/n -> gamma`` with identity covariance.

    For identity covariance the out-of-sample limit coincides with the
    estimation limit; the in-sample limit weights each integrand by ``s``.
    """
    bias, var = limiting_bayes_components(law, alpha0, sigma2, estimator, tuning, flavor, nodes)
    return bias + var


def limiting_l2_norm_sq(law, alpha0, estimator, tuning, sigma2=1.0, nodes=DEFAULT_NODES) -> float:
    """Limit of ``E ||b_hat||^2``: ``sigma2 gamma int g(s)^2 (alpha0 + 1/s) dF``."""
    tv = as_tuning(estimator, tuning)
    shrink = flow_shrinkage if estimator == "flow" else ridge_shrinkage
    if estimator == "ridge" and tv.value == 0 and law.point_mass_zero > 0:
        raise SingularityError("ridge at lambda = 0 is undefined when gamma > 1")

    def h(s):
        g = shrink(s, tv.value)
        g2 = g * g
        return alpha0 * g2 + _safe_ratio(g2, s)

    return sigma2 * law.gamma * mp_integrate(law, h, nodes)


# -- transforms --------------------------------------------------------------------


def stieltjes_mp(law: MPLaw, z: float, nodes: int = DEFAULT_NODES) -> float:
    """``m(-z) = integral 1/(u + z) dF(u)`` for real ``z > 0``."""
    if not z > 0:
        raise DomainError("Stieltjes transform is evaluated only at m(-z) with z > 0")
    return mp_integrate(law, lambda u: 1.0 / (u + z), nodes)


def stieltjes_mp_derivative(law: MPLaw, z: float, nodes: int = DEFAULT_NODES) -> float:
    """``m'(-z)`` by central difference with step ``1e-5 z``."""
    h = 1e-5 * z
    return -(stieltjes_mp(law, z + h, nodes) - stieltjes_mp(law, z - h, nodes)) / (2 * h)


def laplace_mp(law: MPLaw, t, nodes: int = DEFAULT_NODES):
    """``L(t) = integral e^{-t s} dF(s)``; the atom contributes its full mass.

    Accepts a scalar or an array of times.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InputError("Laplace transform needs t >= 0")
    s, w = _nodes(law.gamma, int(nodes))
    vals = np.exp(-np.multiply.outer(t_arr, s)) @ w + law.point_mass_zero
    return float(vals) if np.ndim(t) == 0 else vals


def iterated_laplace(law: MPLaw, lam: float, tail_tol: float = 1e-9, nodes: int = DEFAULT_NODES) -> float:
    """``integral_0^inf e^{-lam t} L(t) dt``, numerically.

    The atom term integrates exactly to ``mass/lam``. The continuous part is
    truncated where its tail, bounded by ``e^{-(lam + a) T} / (lam + a)``,
    drops below ``tail_tol``.
    """
    if not lam > 0:
        raise DomainError("iterated Laplace transform needs lam > 0")
    pm = law.point_mass_zero
    rate = lam + law.a
    horizon = max(math.log(max(1 - pm, 1e-300) / (rate * tail_tol)) / rate, 0.0)

    def cont(t):
        return math.exp(-lam * t) * (laplace_mp(law, t, nodes) - pm)

    val, _ = quad(cont, 0.0, horizon, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val + pm / lam


def limiting_prediction_risk_flow(law, alpha0, sigma2, t, nodes: int = DEFAULT_NODES) -> float:
    """Limiting Bayes prediction risk of gradient flow through the Laplace
    transform of the MP law: ``sigma2 gamma [alpha0 L(2t) + 2 int_0^t (L(u) - L(2u)) du]``.
    """
    t = float(t)
    if not t >= 0:
        raise InputError("flow time must be nonnegative")
    if math.isinf(t):
        raise InputError("the Laplace-transform form needs a finite time")
    integral = 0.0
    if t > 0:
        integral, _ = quad(
            lambda u: laplace_mp(law, u, nodes) - laplace_mp(law, 2 * u, nodes),
            0.0,
            t,
            epsabs=TRANSFORM_TOL,
            epsrel=TRANSFORM_TOL,
            limit=400,
        )
    return sigma2 * law.gamma * (alpha0 * laplace_mp(law, 2 * t, nodes) + 2 * integral)


def limiting_ridge_risk_stieltjes(law, alpha0, sigma2, lam, nodes: int = DEFAULT_NODES) -> float:
    """Limiting ridge Bayes risk written through the Stieltjes transform:
    ``sigma2 gamma [m(-lam) - lam (1 - alpha0 lam) m'(-lam)]``."""
    return sigma2 * law.gamma * (
        stieltjes_mp(law, lam, nodes) - lam * (1 - alpha0 * lam) * stieltjes_mp_derivative(law, lam, nodes)
    )


def limiting_rows(law, alpha0, sigma2, estimator, grid, flavor=ESTIMATION, calibration="none"):
    """CSV rows of a limiting risk curve, same schema as finite-sample curves plus ``limit``."""
    for k in grid:
        bias, var = limiting_bayes_components(law, alpha0, sigma2, estimator, k, flavor)
        norm = limiting_l2_norm_sq(law, alpha0, estimator, k, sigma2)
        yield {
            "estimator": estimator,
            "flavor": flavor,
            "calibration": calibration,
            "tuning": float(k),
            "bias_sq": bias,
            "variance": var,
            "total": bias + var,
            "l2_norm": math.sqrt(norm),
            "limit": True,
        }
