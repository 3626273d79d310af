import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from ensemble_langevin.calibrate import CalibrationError, CalibratorInput, calibrate, pair_distance_quantile, solve_r1
from ensemble_langevin.core import c_d


def test_r1_alpha_one_matches_inverse_normal():
    # C_1(R) = 2 (1 - Phi(R / sqrt 2)), so C_1(R) = 1/3 at R = sqrt2 * Phi^-1(5/6)
    oracle = math.sqrt(2) * special.ndtri(1 - 1 / 6)
    r1 = solve_r1(1.0, 1)
    assert r1 == pytest.approx(oracle, abs=1e-7)
    assert r1 == pytest.approx(1.3661, abs=5e-3)


@given(st.floats(0.01, 1.0), st.integers(1, 10))
def test_r1_root_self_consistent(alpha, d):
    assert abs(c_d(solve_r1(alpha, d), d) - alpha / 3) <= 1e-6


def test_r1_no_root():
    with pytest.raises(CalibrationError, match="alpha"):
        solve_r1(1e-300, 1)


def test_m_f_formula():
    cal = calibrate(CalibratorInput(alpha=0.1, d=2, kappa=1.0, mu=1.0, h=0.1, epsilon=0.1))
    assert cal.m_f >= 120 - 1e-9


def test_epsilon_halving_scales_eta_and_h():
    base = dict(alpha=0.5, d=2, kappa=4.0, mu=0.25, h=1.0, epsilon=0.2)
    a = calibrate(CalibratorInput(**base))
    b = calibrate(CalibratorInput(**{**base, "epsilon": 0.1}))
    assert b.eta == pytest.approx(a.eta / 2)
    assert b.h == pytest.approx(a.h / 4)


@given(
    st.floats(0.05, 1.0),
    st.integers(1, 5),
    st.floats(1.0, 10.0),
    st.floats(0.1, 2.0),
    st.floats(0.01, 0.5),
    st.floats(0.05, 0.95),
    st.floats(-5, 5),
)
def test_calibration_satisfies_its_formulas(alpha, d, kappa, mu, eps, rho, f_star):
    inp = CalibratorInput(alpha=alpha, d=d, kappa=kappa, mu=mu, h=1.0, epsilon=eps, rho=rho, f_star=f_star)
    cal = calibrate(inp)
    assert cal.eta <= eps / (kappa * d) * (1 + 1e-12)
    assert cal.h <= eps**2 / (36 * kappa**2 * d) * (1 + 1e-12)
    assert abs(cal.c_d_r1 - alpha / 3) <= 1e-6
    assert cal.m_f >= 6 * kappa * d / alpha + f_star - 1e-9
    log_bound = (
        math.log(36) + d * math.log(cal.r1) + math.log(kappa) + 2 * math.log(d) + math.log(cal.m_f - f_star)
        - math.log(mu) - d * math.log(cal.eta) - 2 * math.log(eps) + cal.r2 * (cal.r2 + cal.r1) / cal.h
    )
    assert cal.log_n_star == pytest.approx(log_bound, rel=1e-6)
    if math.isfinite(cal.n_star_corollary):
        assert cal.m_f_corollary == pytest.approx(cal.n_star_corollary**rho + f_star, rel=1e-6)


def test_binomial_criterion():
    inp = CalibratorInput(alpha=0.5, d=2, kappa=4, mu=0.25, h=0.1, epsilon=0.5, n=10_000, n_star=1000, target="example1")
    crit = calibrate(inp).r2_criterion
    p = crit["p_lower_binomial"]
    assert stats.binom.cdf(999, 9999, p) == pytest.approx(0.5 / 3, rel=1e-6)
    assert crit["feasible"] and 0 < crit["p_lower_stirling"] < 1
    r2 = crit["r2_from_target"]
    assert r2 == pytest.approx(pair_distance_quantile("example1", 2, p), rel=1e-12)
    assert 0 < r2 < 2


def test_pair_distance_quantile_standard_normal():
    # |y - z| ~ sqrt(2) * |N(0,1)| in 1D
    r = pair_distance_quantile("quadratic", 1, 0.5)
    assert r == pytest.approx(math.sqrt(2) * special.ndtri(0.75), rel=0.02)


def test_input_validation():
    with pytest.raises(ValueError):
        CalibratorInput(alpha=0.0, d=1, kappa=1, mu=1, h=1, epsilon=1)
    with pytest.raises(ValueError):
        CalibratorInput(alpha=0.5, d=1, kappa=1, mu=1, h=1, epsilon=1, rho=1.0)
    with pytest.raises(ValueError):
        CalibratorInput(alpha=0.5, d=1, kappa=-1, mu=1, h=1, epsilon=1)


def test_sampler_fragment_and_dict():
    cal = calibrate(CalibratorInput(alpha=0.9, d=1, kappa=1, mu=1, h=0.1, epsilon=1.0, w1_initial=3.0))
    frag = cal.sampler_fragment()
    assert set(frag) == {"h", "eta", "r1", "r2", "m_f", "n_star"}
    assert cal.iterations_value == pytest.approx(math.log(3.0))
    d = cal.as_dict()
    assert all(not (isinstance(v, float) and not np.isfinite(v)) for v in d.values())
