import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ensemble_langevin.core import alpha_d
from ensemble_langevin.diagnostics import synthetic_force_terms
from ensemble_langevin.estimators import (
    EstimationError,
    FallbackReason,
    ForceResult,
    NeighborIndex,
    cenlmc_force,
    cenlmc_forces,
    enlmc_force,
    enlmc_forces,
    exact_gradient_force,
    linsolve_gradient,
    neighbor_count,
    select_linsolve_neighbors,
)
from ensemble_langevin.state import ParticleEnsemble, SamplerConfig
from ensemble_langevin.targets import TargetDensity, example1_target, example2_target, quadratic_target

from helpers import hand_ensemble, make_ensemble

Q1 = quadratic_target(1)


def linear_target(a):
    a = np.asarray(a, dtype=float)
    return TargetDensity(len(a), lambda x: np.asarray(x) @ a, lambda x: np.broadcast_to(a, np.shape(x)).copy(), -1e9, 1.0)


# --- unconstrained estimator -------------------------------------------------


def test_enlmc_hand_example():
    # alpha_1(0.1) = 5 and (f_j - f_i) / dx^2 * dx = (x_j + x_i) / 2, so the
    # single term is 5 * 0.025 = 0.125
    x = np.array([[0.0], [0.05]])
    f = enlmc_force(0, x, np.array([1.0, 1.0]), Q1, 0.1)
    assert f == pytest.approx([alpha_d(1, 0.1) * 0.05 / 2])
    assert f == pytest.approx([0.125])


def test_enlmc_all_outside_is_zero():
    x = np.array([[0.0], [0.5], [-0.3]])
    assert np.array_equal(enlmc_force(0, x, np.ones(3), Q1, 0.1), [0.0])
    assert np.array_equal(enlmc_forces(x, np.ones(3), Q1, 0.1), np.zeros((3, 1)))


def test_enlmc_strict_boundary():
    x = np.array([[0.0], [0.1]])
    assert np.array_equal(enlmc_force(0, x, np.ones(2), Q1, 0.1), [0.0])


def test_enlmc_errors():
    with pytest.raises(ValueError):
        enlmc_force(0, np.zeros((1, 1)), np.ones(1), Q1, 0.1)
    with pytest.raises(ValueError):
        enlmc_force(0, np.zeros((2, 1)), np.array([1.0, 0.0]), Q1, 0.1)


def test_enlmc_unbiased_for_linear_f():
    a = np.array([0.7])
    terms = synthetic_force_terms(linear_target(a), np.zeros(1), 0.1, 10**5, seed=1)
    mean, se = terms.mean(axis=0), terms.std(axis=0) / math.sqrt(len(terms))
    assert np.all(np.abs(mean - a) <= 3 * se)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_enlmc_batched_matches_loop(d):
    rng = np.random.default_rng(d)
    x = rng.normal(scale=0.3, size=(300, d))
    p = rng.uniform(0.5, 2.0, 300)
    t = quadratic_target(d)
    batched = enlmc_forces(x, p, t, 0.2)
    for i in range(0, 300, 37):
        assert np.allclose(batched[i], enlmc_force(i, x, p, t, 0.2), rtol=1e-12, atol=1e-12)


# --- neighbour search --------------------------------------------------------


def test_neighbor_count_trivial_cases():
    w = np.zeros((5, 2))
    assert neighbor_count(0, w, 0.5) == 4
    w = np.array([[0.0, 0.0], [3.0, 0.0], [3.1, 0.0]])
    assert neighbor_count(0, w, 1.0) == 0


@pytest.mark.parametrize("seed", range(50))
def test_neighbor_queries_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 2001))
    d = int(rng.integers(1, 4))
    r = float(rng.uniform(0.05, 1.0))
    w = rng.normal(size=(n, d))
    dist = np.linalg.norm(w[:, None, :] - w[None, :, :], axis=-1) if n <= 800 else None
    idx = NeighborIndex(w)
    counts = idx.counts(r)
    for i in rng.integers(0, n, 5):
        row = dist[i] if dist is not None else np.linalg.norm(w - w[i], axis=1)
        brute = np.flatnonzero(row <= r)
        brute = brute[brute != i]
        assert counts[i] == len(brute)
        assert np.array_equal(idx.neighbors(int(i), r), brute)
    if dist is not None:
        pairs = idx.pairs(r, sort=True)
        bi, bj = np.nonzero((dist <= r) & ~np.eye(n, dtype=bool))
        assert np.array_equal(pairs, np.column_stack([bi, bj]))


def test_neighbor_index_ignores_nonfinite_rows():
    w = np.array([[0.0], [np.inf], [0.1], [np.nan]])
    idx = NeighborIndex(w)
    assert list(idx.counts(1.0)) == [1, 0, 1, 0]
    assert len(idx.pairs(1.0)) == 2


# --- constrained estimator ---------------------------------------------------


def _hand_config(**kw):
    base = dict(h=0.1, n=2, eta=0.1, r1=10.0, r2=1.0, n_star=1, m_f=20.0)
    base.update(kw)
    return SamplerConfig(**base)


def _hand_1d():
    # x_i = 0, x_j = 0.05, p_j = 1; noise norms derived from x - w
    x = [0.0, 0.05]
    w = [0.0, 0.05 - math.sqrt(0.2) * 0.1]
    noise = [0.0, 0.1]
    return hand_ensemble(x, w, [1.0, 1.0], noise)


def test_cenlmc_hand_ensemble_branch():
    r = cenlmc_force(0, _hand_1d(), _hand_config(), Q1)
    assert not r.used_true_gradient and r.fallback_reason == FallbackReason.NONE
    assert r.neighbor_count == 1
    assert r.force == pytest.approx([0.125])


def test_exact_minus_finite_difference_hand_value():
    # x_i = 0, x_j = eta/2: G = 0, F = alpha * (eta^2/8) / (eta^2/4) * (eta/2) = alpha * eta / 4
    ens = _hand_1d()
    g = exact_gradient_force(0, ens, _hand_config(), Q1).force
    f = cenlmc_force(0, ens, _hand_config(), Q1).force
    assert g == pytest.approx([0.0])
    assert (g - f) == pytest.approx([-alpha_d(1, 0.1) * 0.1 / 4])


def test_cenlmc_r1_zero_noise_fallback():
    ens = make_ensemble(20, 2)
    cfg = SamplerConfig(n=20, r1=0.0, n_star=1)
    for i in range(20):
        r = cenlmc_force(i, ens, cfg, example1_target())
        assert r.fallback_reason == FallbackReason.NOISE_TOO_LARGE
        assert np.array_equal(r.force, example1_target().grad_f(ens.x[i]))


def test_cenlmc_m_f_fallback():
    t = quadratic_target(1)
    ens = hand_ensemble([1.0, 1.01], [1.0, 1.01], [1.0, 1.0], [0.0, 0.0])
    r = cenlmc_force(0, ens, _hand_config(m_f=1e-12), t)
    assert r.fallback_reason == FallbackReason.F_ABOVE_THRESHOLD


def test_cenlmc_n_star_equals_n_always_falls_back():
    ens = make_ensemble(30, 1, spread=0.01)
    cfg = SamplerConfig(n=30, r1=100.0, r2=100.0, n_star=30)
    forces, reasons, counts = cenlmc_forces(ens, cfg, Q1)
    assert np.all(reasons == FallbackReason.TOO_FEW_NEIGHBORS)
    assert np.all(counts == 29)
    assert np.array_equal(forces, Q1.grad_f(ens.x))


def test_cenlmc_precedence_order():
    # particle 0 violates all three constraints; noise wins
    ens = hand_ensemble([5.0, 0.0], [0.0, 0.0], [1e-30, 1.0], [5 / math.sqrt(0.2), 0.0])
    cfg = _hand_config(r1=1.0, m_f=1.0, n_star=5)
    assert cenlmc_force(0, ens, cfg, Q1).fallback_reason == FallbackReason.NOISE_TOO_LARGE
    cfg = _hand_config(r1=100.0, m_f=1.0, n_star=5)
    assert cenlmc_force(0, ens, cfg, Q1).fallback_reason == FallbackReason.F_ABOVE_THRESHOLD
    cfg = _hand_config(r1=100.0, m_f=100.0, n_star=5)
    r = cenlmc_force(0, ens, cfg, Q1)
    assert r.fallback_reason == FallbackReason.TOO_FEW_NEIGHBORS and r.neighbor_count < 5


def test_cenlmc_first_iteration():
    ens = ParticleEnsemble.initial(np.array([[0.0], [1.0]]))
    r = cenlmc_force(1, ens, _hand_config(), Q1)
    assert r.fallback_reason == FallbackReason.FIRST_ITERATION
    assert r.force == pytest.approx([1.0])


def test_cenlmc_rejects_bad_inputs():
    ens = _hand_1d()
    with pytest.raises(ValueError):
        cenlmc_force(0, ens, _hand_config(m_f=0.0), Q1)
    bad = ParticleEnsemble(1, ens.x, ens.w, np.array([1.0, -1.0]), ens.noise_norm)
    with pytest.raises(ValueError):
        cenlmc_force(0, bad, _hand_config(), Q1)


def test_force_result_consistency():
    with pytest.raises(ValueError):
        ForceResult(np.zeros(1), True, 0, FallbackReason.NONE)
    with pytest.raises(ValueError):
        ForceResult(np.zeros(1), False, 0, FallbackReason.NOISE_TOO_LARGE)


def test_linear_f_exact_equals_finite_difference():
    t = linear_target([0.3, -1.2])
    ens = make_ensemble(400, 2, spread=0.2)
    cfg = SamplerConfig(n=400, eta=0.3, r1=10.0, r2=1.0, n_star=5, m_f=1e12)
    for i in range(0, 400, 50):
        a = cenlmc_force(i, ens, cfg, t)
        b = exact_gradient_force(i, ens, cfg, t)
        assert a.fallback_reason == b.fallback_reason
        assert np.allclose(a.force, b.force, rtol=1e-9, atol=1e-9)


@given(st.integers(0, 10**6), st.sampled_from([1, 2]), st.floats(0.05, 0.5), st.integers(1, 40))
def test_batched_constrained_matches_single(seed, d, eta, n_star):
    ens = make_ensemble(120, d, seed=seed, spread=0.5)
    t = quadratic_target(d)
    cfg = SamplerConfig(n=120, eta=eta, r1=0.8, r2=0.6, n_star=n_star, m_f=3.0)
    forces, reasons, counts = cenlmc_forces(ens, cfg, t)
    for i in range(0, 120, 13):
        r = cenlmc_force(i, ens, cfg, t)
        assert reasons[i] == r.fallback_reason
        if r.fallback_reason in (FallbackReason.NONE, FallbackReason.TOO_FEW_NEIGHBORS):
            assert counts[i] == r.neighbor_count
        assert np.allclose(forces[i], r.force, rtol=1e-12, atol=1e-12)
    # exactly one reason per particle, and too-few implies count < n_star
    assert np.all(counts[reasons == FallbackReason.TOO_FEW_NEIGHBORS] < n_star)


def test_batched_exact_variant_matches_single():
    ens = make_ensemble(200, 2, seed=3, spread=0.3)
    t = example2_target()
    cfg = SamplerConfig(n=200, eta=0.3, r1=2.0, r2=1.0, n_star=3, m_f=30.0)
    forces, _, _ = cenlmc_forces(ens, cfg, t, exact=True)
    for i in range(0, 200, 21):
        assert np.allclose(forces[i], exact_gradient_force(i, ens, cfg, t).force, rtol=1e-12, atol=1e-12)


def test_batched_forces_independent_of_workers():
    ens = make_ensemble(3000, 2, seed=5, spread=0.5)
    cfg = SamplerConfig(n=3000, eta=0.1, r1=1.0, r2=0.5, n_star=20, m_f=5.0)
    a = cenlmc_forces(ens, cfg, example1_target(), workers=1)
    b = cenlmc_forces(ens, cfg, example1_target(), workers=4)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


# --- synthetic consistency and finite-difference bias --------------------------


@pytest.mark.parametrize("d", [1, 2, 3])
def test_exact_gradient_estimator_is_consistent(d):
    t = quadratic_target(d)
    x_star = np.linspace(0.5, -0.5, d)
    terms = synthetic_force_terms(t, x_star, 0.1, 10**5, seed=d, exact=True)
    mean, se = terms.mean(axis=0), terms.std(axis=0, ddof=1) / math.sqrt(len(terms))
    assert np.all(np.abs(mean - t.grad_f(x_star)) <= 4 * se)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("eta", [0.05, 0.1, 0.2])
def test_finite_difference_bias_bound(d, eta):
    t = quadratic_target(d)
    x_star = np.full(d, 0.4)
    g = synthetic_force_terms(t, x_star, eta, 10**5, seed=7, exact=True)
    f = synthetic_force_terms(t, x_star, eta, 10**5, seed=7, exact=False)
    gap = f - g
    se = gap.std(axis=0, ddof=1) / math.sqrt(len(gap))
    assert np.linalg.norm(gap.mean(axis=0)) <= t.smoothness_l * eta * d + 4 * np.linalg.norm(se)


# --- linear-solve estimator ---------------------------------------------------


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_linsolve_exact_for_linear_f(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=d)
    x_star = rng.normal(size=d)
    nb = x_star + 0.1 * rng.normal(size=(d, d))
    if np.linalg.cond(nb - x_star) > 1e6:
        return
    z = linsolve_gradient(x_star, x_star @ a, nb, nb @ a)
    assert np.allclose(z, a, atol=1e-10)


def test_linsolve_hand_quadratic():
    eta = 0.1
    t = quadratic_target(2)
    nb = np.array([[eta, 0.0], [0.0, eta]])
    z = linsolve_gradient(np.zeros(2), 0.0, nb, t.f(nb))
    assert z == pytest.approx([eta / 2, eta / 2])
    assert np.linalg.norm(z - t.grad_f(np.zeros(2))) == pytest.approx(eta / math.sqrt(2))


def test_linsolve_duplicate_neighbours_rejected():
    nb = np.array([[0.1, 0.0], [0.1, 0.0]])
    with pytest.raises(EstimationError):
        linsolve_gradient(np.zeros(2), 0.0, nb, np.zeros(2))


def test_linsolve_neighbour_selection():
    nb = np.array([[0.05, 0.0], [0.0, 0.2], [0.0, 0.05], [0.0, -0.05], [0.01, 0.01]])
    sel = select_linsolve_neighbors(np.zeros(2), nb, 0.1)
    # nearest is id 4; ids 0, 2, 3 tie at 0.05 and id 0 wins
    assert list(sel) == [4, 0]
    with pytest.raises(EstimationError):
        select_linsolve_neighbors(np.zeros(2), nb, 0.01)
    z = linsolve_gradient(np.zeros(2), 0.0, nb, quadratic_target(2).f(nb), eta=0.1)
    assert np.all(np.isfinite(z))
