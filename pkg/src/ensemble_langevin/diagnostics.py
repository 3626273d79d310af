"""Measurements on runs: gradient-call ratio, empirical Wasserstein
distances, moments, coupling distance, the variance blow-up probe and the
neighbour-scarcity experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import Tag, alpha_d, gaussian_block, proposal_density
from .targets import TargetDensity, direct_samples

__all__ = [
    "RunDiagnostics",
    "gradient_call_ratio",
    "ratio_series",
    "w1_1d",
    "projection_directions",
    "sliced_w1",
    "blowup_probe",
    "coupling_distance",
    "neighbor_scarcity_experiment",
    "moment_summary",
    "synthetic_force_terms",
]


@dataclass
class RunDiagnostics:
    ratio_series: np.ndarray = field(default_factory=lambda: np.empty(0))
    w1_series: dict = field(default_factory=dict)  # iteration -> W1
    coupling_series: np.ndarray = field(default_factory=lambda: np.empty(0))
    moment_series: dict = field(default_factory=dict)  # iteration -> (mean, cov)


def gradient_call_ratio(flags: np.ndarray, m: int) -> float:
    """Fraction of true-gradient evaluations over iterations ``1..m``.

    ``flags[j, i]`` marks that particle ``i`` used ``grad f`` at iteration
    ``j``; row 0 (the bootstrap step) is excluded.
    """
    flags = np.asarray(flags, dtype=bool)
    if m < 1:
        raise ValueError("m must be at least 1")
    if m >= flags.shape[0]:
        raise ValueError(f"flags only cover iterations 0..{flags.shape[0] - 1}")
    return float(flags[1 : m + 1].sum()) / (m * flags.shape[1])


def ratio_series(flags: np.ndarray) -> np.ndarray:
    """Streaming ``R_m`` for ``m = 1 .. len(flags) - 1``."""
    flags = np.asarray(flags, dtype=bool)
    per_iter = flags[1:].sum(axis=1)
    m = np.arange(1, len(flags))
    return np.cumsum(per_iter) / (m * flags.shape[1])


def w1_1d(a, b) -> float:
    """Exact 1-Wasserstein distance between two equal-size empirical laws."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    if a.shape != b.shape:
        raise ValueError(f"sample counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty samples")
    return float(np.mean(np.abs(a - b)))


def projection_directions(d: int, k: int, seed: int = 0) -> np.ndarray:
    g = gaussian_block(seed, 0, k, d, Tag.PROJECTION)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_w1(a, b, k_projections: int = 64, seed: int = 0) -> float:
    """Average of :func:`w1_1d` over ``k_projections`` random directions.

    The directions depend only on ``seed``, so the statistic is symmetric
    and deterministic.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"sample shapes differ: {a.shape} vs {b.shape}")
    if k_projections < 1:
        raise ValueError("need at least one projection")
    theta = projection_directions(a.shape[1], k_projections, seed)
    pa = np.sort(a @ theta.T, axis=0)
    pb = np.sort(b @ theta.T, axis=0)
    return float(np.mean(np.abs(pa - pb)))


def blowup_probe(
    h: float = 0.1,
    eta: float = 0.1,
    sample_counts=(10**3, 10**4, 10**5, 10**6),
    seed: int = 0,
    separation: float = 1.0,
    ablate: bool = False,
) -> list[float]:
    """Monte Carlo second moment of one pairwise ensemble force term.

    Two particles in 1D with ``f = x^2/2`` are drawn from their one-step
    laws ``x_i ~ N(0, 2h)`` and ``x_j ~ N(separation, 2h)``; the term is
    ``alpha * (f_j - f_i) / |dx|^2 * dx * 1{|dx| < eta} / p_j``. The true
    second moment is infinite, so the estimates keep growing with the
    sample count. ``ablate=True`` drops the ``1/p_j`` weight, which makes
    the moment finite.

    Each count uses its own independent block of draws.
    """
    counts = list(sample_counts)
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("sample_counts must be increasing")
    alpha = alpha_d(1, eta)
    out = []
    for k, n in enumerate(counts):
        g = gaussian_block(seed, k, n, 2, Tag.PROBE)
        xi_i, xi_j = g[:, 0], g[:, 1]
        x_i = math.sqrt(2 * h) * xi_i
        x_j = separation + math.sqrt(2 * h) * xi_j
        dx = x_j - x_i
        inside = np.abs(dx) < eta
        term = np.zeros(n)
        df = 0.5 * (x_j[inside] ** 2 - x_i[inside] ** 2)
        term[inside] = alpha * df / dx[inside]
        if not ablate:
            term[inside] /= proposal_density(xi_j[inside] ** 2, h, 1)
        out.append(float(np.mean(term**2)))
    return out


def coupling_distance(x_traj, z_traj) -> np.ndarray:
    """Mean over particles of ``|x_i - z_i|`` at every stored iteration."""
    xs = getattr(x_traj, "snapshots", x_traj)
    zs = getattr(z_traj, "snapshots", z_traj)
    xs, zs = np.asarray(xs), np.asarray(zs)
    if xs.shape != zs.shape:
        raise ValueError(f"trajectory shapes differ: {xs.shape} vs {zs.shape}")
    its_x = getattr(x_traj, "snapshot_iters", None)
    its_z = getattr(z_traj, "snapshot_iters", None)
    if its_x is not None and its_z is not None and not np.array_equal(its_x, its_z):
        raise ValueError("trajectories were stored at different iterations")
    return np.mean(np.linalg.norm(xs - zs, axis=-1), axis=-1)


def neighbor_scarcity_experiment(
    target: TargetDensity,
    c: float,
    eta_list,
    trials: int,
    seed: int = 0,
) -> np.ndarray:
    """Empirical probability that sample 1 of ``N = round(c / eta^d)`` i.i.d.
    target draws has at least ``d + 1`` samples (itself included) within
    ``eta``, one value per ``eta``."""
    d = target.dim
    probs = []
    for k, eta in enumerate(eta_list):
        n = int(round(c / eta**d))
        if n < d + 1:
            raise ValueError(f"N={n} is below d+1={d + 1} for eta={eta}")
        hits = 0
        for t in range(trials):
            x = direct_samples(target, seed, n, batch=k * trials + t)
            r = np.linalg.norm(x - x[0], axis=1)
            hits += np.count_nonzero(r < eta) >= d + 1
        probs.append(hits / trials)
    return np.array(probs)


def moment_summary(samples):
    """Sample mean and unbiased covariance."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ValueError("need at least two samples")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def synthetic_force_terms(target: TargetDensity, x_star, eta: float, n: int, seed: int = 0,
                          scale=None, exact: bool = False) -> np.ndarray:
    """Per-neighbour terms of the ensemble estimator at a fixed point.

    Neighbours are ``x_j = x_star + scale * z`` with ``z ~ N(0, I)`` and
    weight ``1 / q(x_j)`` for the Gaussian density ``q`` they were drawn
    from. Row ``j`` is ``alpha * df / |dx|^2 * 1{|dx| <= eta} / q(x_j) * dx``,
    with ``df = f(x_j) - f(x_star)`` or, if ``exact``, ``<grad f(x_star), dx>``.
    The mean over rows estimates ``grad f(x_star)`` (exactly in expectation
    when ``exact``).
    """
    x_star = np.asarray(x_star, dtype=float)
    d = x_star.shape[0]
    scale = eta if scale is None else float(scale)
    z = gaussian_block(seed, 0, n, d, Tag.SYNTHETIC)
    dx = scale * z
    sq = np.einsum("ij,ij->i", dx, dx)
    log_q = -0.5 * np.einsum("ij,ij->i", z, z) - d * math.log(scale) - 0.5 * d * math.log(2 * math.pi)
    inside = (np.sqrt(sq) <= eta) & (sq > 0)
    if exact:
        df = dx @ target.grad_f(x_star)
    else:
        df = target.f(x_star + dx) - target.f(x_star)
    out = np.zeros((n, d))
    w = np.zeros(n)
    w[inside] = alpha_d(d, eta) * df[inside] / sq[inside] * np.exp(-log_q[inside])
    out[:] = w[:, None] * dx
    return out
