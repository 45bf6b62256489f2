import math

import numpy as np
import pytest
from scipy.integrate import quad

from gfridge.asymptotics import (
    MPLaw,
    iterated_laplace,
    laplace_mp,
    limiting_bayes_components,
    limiting_bayes_risk,
    limiting_l2_norm_sq,
    limiting_prediction_risk_flow,
    limiting_ridge_risk_stieltjes,
    limiting_rows,
    mp_density,
    mp_integrate,
    stieltjes_mp,
    stieltjes_mp_derivative,
)
from gfridge.errors import DomainError, InputError, NumericError, SingularityError
from gfridge.risk import IN_SAMPLE, log_grid

GAMMAS = [0.25, 0.5, 1.0, 2.0, 4.0]


def stieltjes_oracle(gamma, x):
    """Positive root of gamma x m^2 + (x + 1 - gamma) m - 1 = 0, i.e. m(-x)."""
    b = x + 1 - gamma
    return (-b + math.sqrt(b * b + 4 * gamma * x)) / (2 * gamma * x)


def test_law_fields():
    law = MPLaw(0.25)
    assert (law.a, law.b, law.point_mass_zero) == (0.25, 2.25, 0.0)
    law = MPLaw(4.0)
    assert law.point_mass_zero == 0.75
    assert MPLaw(1.0).a == 0 and MPLaw(1.0).b == 4
    with pytest.raises(InputError):
        MPLaw(0.0)


def test_density():
    assert mp_density(MPLaw(1.0), 1.0) == pytest.approx(math.sqrt(3) / (2 * math.pi), abs=1e-12)
    assert mp_density(MPLaw(1.0), 1.0) == pytest.approx(0.27566, abs=1e-5)
    law = MPLaw(0.25)
    np.testing.assert_array_equal(mp_density(law, np.array([0.0, 0.2, 2.3, 10.0])), 0)
    assert mp_density(MPLaw(4.0), 0.0) == 0  # atom reported separately


@pytest.mark.parametrize("gamma", GAMMAS)
def test_moments_and_refinement(gamma):
    law = MPLaw(gamma)
    assert mp_integrate(law, np.ones_like) == pytest.approx(1.0, abs=1e-8)
    assert mp_integrate(law, lambda s: s) == pytest.approx(1.0, abs=1e-8)
    assert mp_integrate(law, lambda s: s * s) == pytest.approx(1 + gamma, abs=1e-8)
    # continuous mass against scipy quad on the raw density
    cont, _ = quad(lambda s: mp_density(law, s), law.a, law.b, limit=200, epsabs=1e-12)
    assert cont + law.point_mass_zero == pytest.approx(1.0, abs=1e-8)
    h = lambda s: np.exp(-s) / (1 + s)
    lo, hi = mp_integrate(law, h, 2048), mp_integrate(law, h, 4096)
    assert abs(lo - hi) <= 1e-8 * abs(hi)


def test_integrate_non_finite():
    with pytest.raises(NumericError):
        mp_integrate(MPLaw(0.5), lambda s: np.full_like(s, np.nan))
    with np.errstate(divide="ignore"):
        with pytest.raises(NumericError):
            mp_integrate(MPLaw(2.0), lambda s: 1.0 / s)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("z", [0.1, 1.0, 10.0])
def test_stieltjes_closed_form(gamma, z):
    assert stieltjes_mp(MPLaw(gamma), z) == pytest.approx(stieltjes_oracle(gamma, z), rel=1e-8)


def test_stieltjes_properties():
    law = MPLaw(1.0)
    assert stieltjes_mp(law, 1.0) == pytest.approx(stieltjes_oracle(1.0, 1.0), abs=1e-8)
    zs = np.geomspace(0.1, 100, 20)
    m = np.array([stieltjes_mp(law, z) for z in zs])
    assert np.all(m > 0) and np.all(np.diff(m) < 0)
    assert 1e6 * stieltjes_mp(law, 1e6) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DomainError):
        stieltjes_mp(law, 0.0)
    with pytest.raises(DomainError):
        stieltjes_mp(law, -1.0)
    # derivative against the differentiated closed form
    h = 1e-6
    d = -(stieltjes_oracle(1.0, 2 + h) - stieltjes_oracle(1.0, 2 - h)) / (2 * h)
    assert stieltjes_mp_derivative(law, 2.0) == pytest.approx(d, rel=1e-6)


def test_laplace():
    for g in GAMMAS:
        law = MPLaw(g)
        assert laplace_mp(law, 0.0) == pytest.approx(1.0, abs=1e-12)
        v = laplace_mp(law, np.linspace(0, 20, 50))
        assert np.all(np.diff(v) < 0)
        assert v[-1] >= law.point_mass_zero
    with pytest.raises(InputError):
        laplace_mp(MPLaw(1.0), -1.0)


def test_laplace_matches_bias_component():
    law, alpha0, sigma2 = MPLaw(2.0), 0.5, 1.0
    bias, _ = limiting_bayes_components(law, alpha0, sigma2, "flow", 1.0)
    assert laplace_mp(law, 2.0) == pytest.approx(bias / (sigma2 * law.gamma * alpha0), rel=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_iterated_laplace_identity(gamma, lam):
    law = MPLaw(gamma)
    assert iterated_laplace(law, lam) == pytest.approx(stieltjes_mp(law, lam), abs=1e-6)


def test_limit_endpoints():
    for g in (0.5, 2.0):
        law = MPLaw(g)
        assert limiting_bayes_risk(law, 0.7, 1.3, "flow", 0.0) == pytest.approx(1.3 * g * 0.7, rel=1e-10)
        assert limiting_bayes_risk(law, 0.7, 1.3, "ridge", math.inf) == pytest.approx(1.3 * g * 0.7, rel=1e-10)
        assert limiting_bayes_risk(law, 0.7, 1.3, "ridge", 1e12) == pytest.approx(1.3 * g * 0.7, rel=1e-8)
        assert limiting_l2_norm_sq(law, 0.7, "flow", 0.0) == 0
        assert limiting_l2_norm_sq(law, 0.7, "ridge", math.inf) == 0
    # r^2 = sigma2 gamma alpha0 recovered
    assert limiting_bayes_risk(MPLaw(2.0), 0.5, 1.0, "flow", 0.0) == pytest.approx(1.0)
    # t -> inf, gamma < 1: gamma (alpha0 + int 1/s dF) with int 1/s dF = 1/(1 - gamma)
    g, a0 = 0.5, 0.7
    assert limiting_l2_norm_sq(MPLaw(g), a0, "flow", math.inf) == pytest.approx(g * (a0 + 1 / (1 - g)), rel=1e-8)
    with pytest.raises(SingularityError):
        limiting_bayes_risk(MPLaw(2.0), 0.5, 1.0, "ridge", 0.0)
    with pytest.raises(InputError):
        limiting_bayes_risk(MPLaw(2.0), 0.0, 1.0, "ridge", 1.0)


def test_ridge_limit_optimum_is_stieltjes():
    # at lam = 1/alpha0 the ridge limit is sigma2 gamma m(-lam)
    law, a0 = MPLaw(2.0), 0.5
    r = limiting_bayes_risk(law, a0, 1.0, "ridge", 1 / a0)
    assert r == pytest.approx(law.gamma * stieltjes_oracle(2.0, 1 / a0), rel=1e-8)


@pytest.mark.parametrize("gamma", [0.5, 2.0])
@pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 3.0])
def test_symmetric_ridge_rewrite(gamma, lam):
    law, a0, s2 = MPLaw(gamma), 0.8, 1.2
    direct = limiting_bayes_risk(law, a0, s2, "ridge", lam)
    assert limiting_ridge_risk_stieltjes(law, a0, s2, lam) == pytest.approx(direct, rel=1e-5)


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_laplace_form_equals_direct(gamma):
    law, a0 = MPLaw(gamma), 1 / gamma
    for t in log_grid(2.0**-10, 2.0**10, 50):
        direct = limiting_bayes_risk(law, a0, 1.0, "flow", t)
        assert limiting_prediction_risk_flow(law, a0, 1.0, t) == pytest.approx(direct, abs=1e-6)
    assert limiting_prediction_risk_flow(law, a0, 1.0, 0.0) == pytest.approx(gamma * a0)


def test_in_sample_limit_weights_by_s():
    law, a0 = MPLaw(0.5), 1.0
    b, v = limiting_bayes_components(law, a0, 1.0, "ridge", 0.4, IN_SAMPLE)
    ref_b = law.gamma * mp_integrate(law, lambda s: a0 * (0.4 / (s + 0.4)) ** 2 * s)
    ref_v = law.gamma * mp_integrate(law, lambda s: s * s / (s + 0.4) ** 2)
    assert (b, v) == pytest.approx((ref_b, ref_v), rel=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_continuity_on_grid(gamma):
    law = MPLaw(gamma)
    for est in ("flow", "ridge"):
        r = np.array([limiting_bayes_risk(law, 1 / gamma, 1.0, est, k) for k in log_grid()])
        assert np.max(np.abs(np.diff(r)) / r[:-1]) < 0.1


def test_limiting_rows_schema():
    rows = list(limiting_rows(MPLaw(2.0), 0.5, 1.0, "flow", [0.5, 1.0]))
    assert len(rows) == 2
    assert list(rows[0]) == ["estimator", "flavor", "calibration", "tuning", "bias_sq", "variance", "total", "l2_norm", "limit"]
    assert rows[0]["limit"] is True
    assert rows[1]["total"] == pytest.approx(limiting_bayes_risk(MPLaw(2.0), 0.5, 1.0, "flow", 1.0))
