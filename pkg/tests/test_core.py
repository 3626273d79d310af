import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from ensemble_langevin.core import (
    MAX_DIM,
    RngStream,
    Tag,
    alpha_d,
    ball_volume,
    c_d,
    gaussian_block,
    gaussian_draw,
    proposal_density,
    sphere_surface,
    uniform_block,
    uniform_draw,
)


@pytest.mark.parametrize("d, expected", [(1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi)])
def test_sphere_surface_low_dims(d, expected):
    assert sphere_surface(d) == pytest.approx(expected, rel=1e-14)


def test_sphere_surface_rejects_bad_dims():
    for d in (0, -1, 1.5, MAX_DIM + 1):
        with pytest.raises(ValueError):
            sphere_surface(d)


def test_ball_volume_matches_gamma_formula():
    for d in range(1, 12):
        oracle = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * 0.3**d
        assert ball_volume(d, 0.3) == pytest.approx(oracle, rel=1e-13)


def test_alpha_d_hand_values():
    assert alpha_d(1, 0.1) == pytest.approx(5.0, rel=1e-14)
    assert alpha_d(2, 0.1) == pytest.approx(200 / math.pi, rel=1e-14)


@given(st.integers(1, 20), st.floats(0.01, 5.0))
def test_alpha_times_volume_is_d(d, eta):
    assert alpha_d(d, eta) * ball_volume(d, eta) == pytest.approx(d, rel=1e-12)


def test_alpha_d_overflow_and_bad_eta():
    with pytest.raises(OverflowError):
        alpha_d(50, 1e-8)
    with pytest.raises(ValueError):
        alpha_d(1, 0.0)


def test_proposal_density_values():
    assert proposal_density(0.0, 1 / (4 * math.pi), 2) == pytest.approx(1.0, rel=1e-14)
    base = (0.4 * math.pi) ** -0.5
    assert proposal_density(0.0, 0.1, 1) == pytest.approx(base, rel=1e-14)
    assert base == pytest.approx(0.8921, abs=1e-4)
    assert proposal_density(2.0, 0.1, 1) == pytest.approx(base * math.exp(-1), rel=1e-14)
    assert proposal_density(2.0, 0.1, 1) == pytest.approx(0.3282, abs=1e-4)


@given(st.floats(0, 50), st.floats(1e-3, 2.0), st.integers(1, 5))
def test_proposal_density_matches_scipy(sq, h, d):
    # density of N(w, 2h I) at w + sqrt(2h) xi with |xi|^2 = sq
    xi = np.zeros(d)
    xi[0] = math.sqrt(sq)
    oracle = stats.multivariate_normal(np.zeros(d), 2 * h * np.eye(d)).pdf(math.sqrt(2 * h) * xi)
    assert proposal_density(sq, h, d) == pytest.approx(oracle, rel=1e-10, abs=1e-300)


def test_proposal_density_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        proposal_density(1.0, 0.0, 1)


def test_c_d_erfc_oracle_1d():
    r1 = 3 * math.sqrt(5) / 10
    assert c_d(r1, 1) == pytest.approx(special.erfc(r1 / 2), abs=1e-12)
    assert abs(c_d(r1, 1) - 0.6354) <= 1e-3


@pytest.mark.parametrize("d", range(1, 11))
def test_c_d_at_zero_is_one(d):
    assert abs(c_d(0.0, d) - 1.0) <= 1e-9


@given(st.floats(0, 6), st.integers(1, 30))
def test_c_d_matches_chi_survival(r1, d):
    # |xi| ~ chi_d, so C_d(r1) = P(chi_d > r1 sqrt(d/2))
    oracle = stats.chi(d).sf(r1 * math.sqrt(d / 2))
    assert c_d(r1, d) == pytest.approx(oracle, abs=1e-9)


def test_c_d_tail_vanishes_and_rejects_negative():
    assert c_d(100.0, 2) < 1e-12
    with pytest.raises(ValueError):
        c_d(-0.1, 1)


@given(st.floats(0, 5), st.floats(0, 5), st.integers(1, 8))
def test_c_d_monotone(a, b, d):
    lo, hi = sorted((a, b))
    assert c_d(hi, d) <= c_d(lo, d) + 1e-12


def test_rng_same_stream_twice():
    s = RngStream(seed=7, particle=3, iteration=11, tag=Tag.NOISE)
    assert np.array_equal(gaussian_draw(s, 4), gaussian_draw(s, 4))


@given(st.integers(0, 2**64 - 1), st.integers(0, 200), st.integers(1, 300), st.integers(1, 6))
def test_block_rows_equal_single_draws(seed, it, n, k):
    block = uniform_block(seed, it, n, k)
    for i in {0, n // 2, n - 1}:
        assert np.array_equal(block[i], uniform_draw(RngStream(seed, i, it), k))
    g = gaussian_block(seed, it, n, k)
    assert np.array_equal(g[n - 1], gaussian_draw(RngStream(seed, n - 1, it), k))


def test_block_prefix_does_not_depend_on_n():
    a = gaussian_block(5, 3, 10, 2)
    b = gaussian_block(5, 3, 1000, 2)
    assert np.array_equal(a, b[:10])


def test_streams_differ_across_tags_iterations_seeds():
    base = uniform_block(1, 0, 50, 2)
    assert not np.array_equal(base, uniform_block(1, 0, 50, 2, Tag.INIT))
    assert not np.array_equal(base, uniform_block(1, 1, 50, 2))
    assert not np.array_equal(base, uniform_block(2, 0, 50, 2))


def test_uniforms_open_interval():
    u = uniform_block(0, 0, 10**5, 1)
    assert u.min() > 0 and u.max() < 1


def test_gaussian_moments_1e6():
    z = gaussian_block(123, 0, 10**6, 1).ravel()
    assert abs(z.mean()) <= 4 / math.sqrt(10**6)
    assert abs(z.var() - 1) <= 0.01
    assert stats.kstest(z[:10**5], "norm").pvalue > 1e-4
