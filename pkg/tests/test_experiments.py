import dataclasses
import filecmp
import math

import numpy as np
import pytest

from gfridge.errors import InputError
from gfridge.experiments import (
    DISTRIBUTIONS,
    ExperimentConfig,
    calibrate_by_l2,
    draw_entries,
    equicorrelation_cov,
    equicorrelation_sqrt,
    generate_design,
    match_ridge_lambda,
    monte_carlo_risk,
    run_experiment,
    run_on_design,
    run_seeds,
    supplement_configs,
)
from gfridge.io import write_curve_csv
from gfridge.risk import (
    ESTIMATION,
    IN_SAMPLE,
    OUT_OF_SAMPLE,
    PriorModel,
    RiskFlavor,
    expected_l2_norm_sq,
    log_grid,
    risk_bayes,
    risk_curve,
)
from gfridge.spectral import decompose


def test_config_validation():
    with pytest.raises(InputError):
        ExperimentConfig(dist="cauchy")
    with pytest.raises(InputError):
        ExperimentConfig(rho=1.0)
    with pytest.raises(InputError):
        ExperimentConfig(flavor="risky")
    with pytest.raises(InputError):
        ExperimentConfig(n=0)


@pytest.mark.parametrize("dist", DISTRIBUTIONS)
def test_entries_standardized(dist):
    z = draw_entries(np.random.default_rng(0), dist, 2_000_000)
    assert abs(z.mean()) < 5 / math.sqrt(len(z))
    assert z.var() == pytest.approx(1.0, abs=0.02)
    if dist == "bernoulli-half":
        assert set(np.unique(z)) == {-1.0, 1.0}


def test_equicorrelation_sqrt():
    for p, rho in [(1, 0.0), (5, 0.5), (7, -0.1), (30, 0.9)]:
        R = equicorrelation_sqrt(p, rho)
        np.testing.assert_allclose(R @ R, equicorrelation_cov(p, rho), atol=1e-12)
        np.testing.assert_allclose(R, R.T)
    np.testing.assert_array_equal(equicorrelation_sqrt(4, 0.0), np.eye(4))


def test_design_identity_and_determinism():
    cfg = ExperimentConfig(n=20, p=5, seed=3)
    X = generate_design(cfg)
    Z = np.random.default_rng(3).standard_normal((20, 5))
    np.testing.assert_array_equal(X, Z)
    np.testing.assert_array_equal(generate_design(cfg), X)
    assert not np.array_equal(generate_design(dataclasses.replace(cfg, seed=4)), X)


@pytest.mark.parametrize("dist,tol", [("gaussian", 0.02), ("bernoulli-half", 0.02), ("student-t3", 0.1)])
def test_design_population_covariance(dist, tol):
    # t(3) has no fourth moment, so its sample covariance converges slowly
    cfg = ExperimentConfig(dist=dist, n=100_000, p=10, rho=0.5, seed=1)
    X = generate_design(cfg)
    assert np.max(np.abs(X.T @ X / cfg.n - cfg.population_cov())) <= tol


# -- Monte Carlo -----------------------------------------------------------------


def test_mc_noiseless_interpolation():
    X = generate_design(ExperimentConfig(n=10, p=4, seed=2))
    mc = monte_carlo_risk(X, 0.0, "flow", math.inf, reps=1000, beta0=np.arange(4.0))
    assert mc.mean <= 1e-20 and mc.stderr <= 1e-20


def test_mc_argument_checks():
    X = np.eye(3)
    with pytest.raises(InputError):
        monte_carlo_risk(X, 1.0, "flow", 1.0, reps=10, r2=1.0)
    with pytest.raises(InputError):
        monte_carlo_risk(X, 1.0, "flow", 1.0, reps=1000)


def test_mc_reproducible_and_batch_independent_seeding():
    X = generate_design(ExperimentConfig(n=8, p=3, seed=5))
    a = monte_carlo_risk(X, 1.0, "ridge", 0.5, reps=25_000, seed=9, r2=1.0)
    b = monte_carlo_risk(X, 1.0, "ridge", 0.5, reps=25_000, seed=9, r2=1.0)
    assert a == b
    c = monte_carlo_risk(X, 1.0, "ridge", 0.5, reps=25_000, seed=10, r2=1.0)
    assert c.mean != a.mean


@pytest.mark.parametrize("flavor", [ESTIMATION, IN_SAMPLE, OUT_OF_SAMPLE])
@pytest.mark.parametrize("estimator,tuning", [("flow", 0.8), ("ridge", 0.6)])
def test_mc_agrees_with_closed_forms(flavor, estimator, tuning):
    cfg = ExperimentConfig(n=9, p=5, rho=0.5, seed=7, flavor=flavor)
    X = generate_design(cfg)
    sd = decompose(X)
    prior = PriorModel(0.8, 1.5, 9, 5)
    fl = cfg.risk_flavor()
    b0 = np.array([1.0, -0.5, 0.0, 2.0, 0.3])
    mc = monte_carlo_risk(X, 0.8, estimator, tuning, fl, reps=100_000, seed=1, r2=1.5)
    assert mc.agrees(risk_bayes(sd, prior, estimator, tuning, fl).total)
    from gfridge.risk import risk_fixed

    mc = monte_carlo_risk(X, 0.8, estimator, tuning, fl, reps=100_000, seed=2, beta0=b0)
    assert mc.agrees(risk_fixed(sd, b0, prior, estimator, tuning, fl).total)


# -- l2 calibration ------------------------------------------------------------------


def small_problem(n=30, p=60, seed=0):
    cfg = ExperimentConfig(n=n, p=p, seed=seed)
    sd = decompose(generate_design(cfg))
    return sd, cfg.prior()


def test_calibration_zero_pairs_with_infinity():
    sd, prior = small_problem()
    lam, ok = match_ridge_lambda(sd, prior, [0.0])
    assert lam[0] == math.inf and ok[0]
    flow = risk_curve(sd, prior, "flow", [0.0, 1.0])
    rows = calibrate_by_l2(flow, sd, prior, RiskFlavor())
    assert rows[0].lam == math.inf and rows[0].l2_norm == 0 and rows[0].ratio == pytest.approx(1.0)


@pytest.mark.parametrize("shape", [(30, 60), (60, 30)])
def test_calibration_matches_norms(shape):
    sd, prior = small_problem(*shape)
    grid = log_grid()
    flow = risk_curve(sd, prior, "flow", grid)
    rows = calibrate_by_l2(flow, sd, prior, RiskFlavor())
    matched = [r.matched for r in rows]
    k = sum(matched)
    assert k >= 150 and matched == [True] * k + [False] * (len(rows) - k)
    sup = expected_l2_norm_sq(sd, prior, "ridge", 0.0 if shape[0] > shape[1] else 1e-300)
    for t, r in zip(grid, rows):
        if not r.matched:
            # only targets indistinguishable from the ridge supremum go unmatched
            assert r.l2_norm**2 >= sup * (1 - 1e-12)
            assert math.isnan(r.lam) and math.isnan(r.ratio)
            continue
        nf = expected_l2_norm_sq(sd, prior, "flow", t)
        nr = expected_l2_norm_sq(sd, prior, "ridge", r.lam)
        assert abs(nr - nf) <= 1e-10 * nf
        assert r.risk_ridge == pytest.approx(risk_bayes(sd, prior, "ridge", r.lam).total, rel=1e-14)


def test_calibration_unmatched_above_supremum():
    sd, prior = small_problem(60, 30)
    sup = expected_l2_norm_sq(sd, prior, "ridge", 0.0)
    lam, ok = match_ridge_lambda(sd, prior, [0.5 * sup, 1.5 * sup])
    assert ok[0] and not ok[1] and math.isnan(lam[1])


# -- experiment runs ---------------------------------------------------------------


def test_headline_configuration_single_seed():
    res = run_experiment(ExperimentConfig(n=500, p=1000, seed=0))
    s = res.summary
    assert s.max_pathwise_ratio == pytest.approx(1.2164, abs=0.02)
    assert s.ratio_of_minima == pytest.approx(1.0036, abs=0.005)
    assert s.max_l2calibrated_ratio == pytest.approx(1.0050, abs=0.005)
    assert s.ratio_of_minima >= 1 - 1e-6
    assert len(res.limits) == 400 and all(r["limit"] for r in res.limits)


def test_single_point_grid_summary():
    cfg = ExperimentConfig(n=20, p=10, seed=1, grid_lo=0.5, grid_hi=0.5, grid_n=1)
    res = run_experiment(cfg)
    sd, prior = decompose(generate_design(cfg)), cfg.prior()
    ratio = risk_bayes(sd, prior, "flow", 0.5).total / risk_bayes(sd, prior, "ridge", 2.0).total
    assert res.summary.max_pathwise_ratio == ratio
    assert res.summary.ratio_of_minima == ratio


def test_summary_invariant_to_grid_reversal_and_scaling():
    cfg = ExperimentConfig(n=40, p=25, rho=0.5, seed=2, flavor=OUT_OF_SAMPLE)
    X = generate_design(cfg)
    a = run_on_design(X, cfg).summary
    b = run_on_design(X, cfg, grid=cfg.grid[::-1]).summary
    assert (a.max_pathwise_ratio, a.ratio_of_minima, a.max_l2calibrated_ratio) == (
        b.max_pathwise_ratio,
        b.ratio_of_minima,
        b.max_l2calibrated_ratio,
    )
    # y -> 2y, sigma -> 2 sigma, r -> 2 r: every risk scales by exactly 4
    c = run_on_design(X, dataclasses.replace(cfg, sigma2=4.0, r2=4.0)).summary
    assert (a.max_pathwise_ratio, a.ratio_of_minima) == (c.max_pathwise_ratio, c.ratio_of_minima)
    assert c.max_l2calibrated_ratio == pytest.approx(a.max_l2calibrated_ratio, rel=1e-9)


def test_csv_determinism(tmp_path):
    cfg = ExperimentConfig(n=50, p=80, seed=3)
    for k in range(2):
        res = run_experiment(cfg)
        write_curve_csv(tmp_path / f"inv{k}.csv", res.inverse_rows())
        write_curve_csv(tmp_path / f"l2{k}.csv", res.l2_rows())
    assert filecmp.cmp(tmp_path / "inv0.csv", tmp_path / "inv1.csv", shallow=False)
    assert filecmp.cmp(tmp_path / "l20.csv", tmp_path / "l21.csv", shallow=False)


def test_run_seeds_threads_match_serial():
    cfg = ExperimentConfig(n=30, p=20, seed=0)
    serial = run_seeds(cfg, [1, 2, 3])
    threaded = run_seeds(cfg, [1, 2, 3], threads=3)
    assert [r.summary.to_json() for r in serial] == [r.summary.to_json() for r in threaded]


def test_supplement_configs():
    cfgs = supplement_configs(seed=5, flavors=(ESTIMATION,))
    assert len(cfgs) == 12
    assert {(c.dist, c.rho, c.n, c.p) for c in cfgs} == {
        (d, r, n, p) for d in DISTRIBUTIONS for r in (0.0, 0.5) for n, p in ((1000, 500), (500, 1000))
    }
