"""Gradient surrogates built from neighbouring particles.

Two code paths compute the same forces:

* per-particle functions (``enlmc_force``, ``cenlmc_force``,
  ``exact_gradient_force``) loop over every other particle directly;
* batched functions (``enlmc_forces``, ``cenlmc_forces``) use a
  :class:`NeighborIndex` and are what the samplers call.

The per-particle versions are the reference the batched ones are tested
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.spatial import cKDTree

from .core import alpha_d
from .state import ParticleEnsemble, SamplerConfig

__all__ = [
    "FallbackReason",
    "ForceResult",
    "NeighborIndex",
    "EstimationError",
    "COINCIDENT_TOL",
    "enlmc_force",
    "enlmc_forces",
    "cenlmc_force",
    "cenlmc_forces",
    "exact_gradient_force",
    "neighbor_count",
    "select_linsolve_neighbors",
    "linsolve_gradient",
]

# pairs closer than this are skipped (0/0 in the finite difference)
COINCIDENT_TOL = 1e-12
LINSOLVE_MAX_COND = 1e12


class FallbackReason(IntEnum):
    NONE = 0
    NOISE_TOO_LARGE = 1
    F_ABOVE_THRESHOLD = 2
    TOO_FEW_NEIGHBORS = 3
    FIRST_ITERATION = 4


class EstimationError(ArithmeticError):
    """The surrogate cannot be formed; callers fall back to the true gradient."""


@dataclass(frozen=True)
class ForceResult:
    force: np.ndarray
    used_true_gradient: bool
    neighbor_count: int
    fallback_reason: FallbackReason = FallbackReason.NONE

    def __post_init__(self):
        if self.used_true_gradient != (self.fallback_reason != FallbackReason.NONE):
            raise ValueError("used_true_gradient must agree with fallback_reason")


class NeighborIndex:
    """Fixed-radius queries over a point cloud.

    Non-finite rows are never reported as anyone's neighbour.
    """

    def __init__(self, points: np.ndarray, workers: int = 1):
        points = np.asarray(points, dtype=float)
        self.n = len(points)
        self.workers = workers
        finite = np.all(np.isfinite(points), axis=1)
        self._ids = np.flatnonzero(finite)
        self._points = points
        self._tree = cKDTree(points[finite]) if len(self._ids) else None

    def counts(self, radius: float, query=None) -> np.ndarray:
        """Number of *other* points within ``radius`` (inclusive) of each query id."""
        query = np.arange(self.n) if query is None else np.asarray(query, dtype=int)
        out = np.zeros(len(query), dtype=np.int64)
        if self._tree is None or len(query) == 0:
            return out
        pts = self._points[query]
        ok = np.all(np.isfinite(pts), axis=1)
        if np.any(ok):
            hits = self._tree.query_ball_point(
                pts[ok], radius, return_length=True, workers=self.workers
            )
            out[ok] = np.asarray(hits, dtype=np.int64) - 1  # drop self
        return out

    def neighbors(self, i: int, radius: float) -> np.ndarray:
        if self._tree is None or not np.all(np.isfinite(self._points[i])):
            return np.empty(0, dtype=np.int64)
        hits = self._ids[self._tree.query_ball_point(self._points[i], radius)]
        return np.sort(hits[hits != i])

    def pairs(self, radius: float, sort: bool = False) -> np.ndarray:
        """All ordered pairs ``(i, j)``, ``i != j``, within ``radius``.

        The order is deterministic for a given point set; ``sort=True``
        makes it lexicographic.
        """
        if self._tree is None:
            return np.empty((0, 2), dtype=np.int64)
        und = self._tree.query_pairs(radius, output_type="ndarray")
        und = self._ids[und] if len(und) else und.reshape(0, 2).astype(np.int64)
        both = np.concatenate([und, und[:, ::-1]])
        if sort:
            both = both[np.lexsort((both[:, 1], both[:, 0]))]
        return both


def neighbor_count(i: int, w: np.ndarray, r2: float, index: NeighborIndex | None = None) -> int:
    """Number of ``j != i`` with ``|w_j - w_i| <= r2``."""
    index = NeighborIndex(w) if index is None else index
    return int(index.counts(r2, [i])[0])


def _term(alpha, df, dx, sq, p_j):
    return (alpha * df / (sq * p_j))[..., None] * dx


def enlmc_force(i: int, x: np.ndarray, p: np.ndarray, target, eta: float) -> np.ndarray:
    """Unconstrained ensemble force on particle ``i``, averaged over ``N - 1``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two particles")
    if np.any(~(p > 0)):
        raise ValueError("density values must be positive")
    alpha = alpha_d(d, eta)
    fx = target.f(x)
    total = np.zeros(d)
    for j in range(n):
        if j == i:
            continue
        dx = x[j] - x[i]
        sq = float(dx @ dx)
        if sq < COINCIDENT_TOL**2 or not np.sqrt(sq) < eta:
            continue
        total += _term(alpha, fx[j] - fx[i], dx, sq, p[j])
    return total / (n - 1)


def enlmc_forces(
    x: np.ndarray,
    p: np.ndarray,
    target,
    eta: float,
    index: NeighborIndex | None = None,
) -> np.ndarray:
    """Batched :func:`enlmc_force` for every particle."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two particles")
    if np.any(~(p > 0)):
        raise ValueError("density values must be positive")
    alpha = alpha_d(d, eta)
    index = NeighborIndex(x) if index is None else index
    pairs = index.pairs(eta)
    out = np.zeros((n, d))
    if len(pairs) == 0:
        return out
    src, dst = pairs[:, 0], pairs[:, 1]
    with np.errstate(over="ignore", invalid="ignore"):
        fx = target.f(x)
        dx = x[dst] - x[src]
        sq = np.einsum("ij,ij->i", dx, dx)
        keep = (np.sqrt(sq) < eta) & (sq >= COINCIDENT_TOL**2)
        src, dst, dx, sq = src[keep], dst[keep], dx[keep], sq[keep]
        terms = _term(alpha, fx[dst] - fx[src], dx, sq, p[dst])
    for k in range(d):
        out[:, k] = np.bincount(src, weights=terms[:, k], minlength=n)
    return out / (n - 1)


def _check_cenlmc_inputs(ensemble: ParticleEnsemble, config: SamplerConfig, target):
    if not config.m_f > target.f_star:
        raise ValueError(f"m_f={config.m_f} must exceed f_star={target.f_star}")
    ensemble.validate()
    if ensemble.n < 2:
        raise ValueError("need at least two particles")
    if ensemble.dim != target.dim:
        raise ValueError("ensemble and target dimensions differ")


def _constrained_force_single(i, ensemble, config, target, exact):
    _check_cenlmc_inputs(ensemble, config, target)
    x, w = ensemble.x, ensemble.w
    xi = x[i]
    if ensemble.iteration == 0:
        return ForceResult(target.grad_f(xi), True, 0, FallbackReason.FIRST_ITERATION)
    if np.sqrt(2 * config.h) * ensemble.noise_norm[i] > config.r1:
        return ForceResult(target.grad_f(xi), True, 0, FallbackReason.NOISE_TOO_LARGE)
    f_i = float(target.f(xi))
    if f_i > config.m_f:
        return ForceResult(target.grad_f(xi), True, 0, FallbackReason.F_ABOVE_THRESHOLD)
    dw = np.linalg.norm(w - w[i], axis=1)
    eligible = dw <= config.r2
    eligible[i] = False
    count = int(eligible.sum())
    if count < config.n_star:
        return ForceResult(target.grad_f(xi), True, count, FallbackReason.TOO_FEW_NEIGHBORS)
    alpha = alpha_d(ensemble.dim, config.eta)
    g_i = target.grad_f(xi) if exact else None
    total = np.zeros(ensemble.dim)
    for j in np.flatnonzero(eligible):
        dx = x[j] - xi
        sq = float(dx @ dx)
        if sq < COINCIDENT_TOL**2 or np.sqrt(sq) > config.eta:
            continue
        df = float(g_i @ dx) if exact else float(target.f(x[j])) - f_i
        total += _term(alpha, df, dx, sq, ensemble.p_vals[j])
    return ForceResult(total / count, False, count, FallbackReason.NONE)


def cenlmc_force(i: int, ensemble: ParticleEnsemble, config: SamplerConfig, target) -> ForceResult:
    """Constrained ensemble force on particle ``i``.

    Falls back to ``grad_f`` when the previous noise step exceeds ``r1``,
    when ``f(x_i) > m_f`` or when fewer than ``n_star`` particles have drift
    parts within ``r2``; checked in that order.
    """
    return _constrained_force_single(i, ensemble, config, target, exact=False)


def exact_gradient_force(i: int, ensemble: ParticleEnsemble, config: SamplerConfig, target) -> ForceResult:
    """:func:`cenlmc_force` with ``f(x_j) - f(x_i)`` replaced by
    ``<grad f(x_i), x_j - x_i>``; isolates the finite-difference error."""
    return _constrained_force_single(i, ensemble, config, target, exact=True)


def cenlmc_forces(
    ensemble: ParticleEnsemble,
    config: SamplerConfig,
    target,
    exact: bool = False,
    workers: int = 1,
):
    """Batched constrained forces.

    Returns ``(forces, reasons, counts)`` with ``reasons`` an ``int8`` array
    of :class:`FallbackReason` codes and ``counts`` the eligible-neighbour
    numbers (zero where not evaluated).
    """
    _check_cenlmc_inputs(ensemble, config, target)
    x, w = ensemble.x, ensemble.w
    n, d = x.shape
    reasons = np.zeros(n, dtype=np.int8)
    counts = np.zeros(n, dtype=np.int64)
    forces = np.empty((n, d))
    if ensemble.iteration == 0:
        reasons[:] = FallbackReason.FIRST_ITERATION
        forces[:] = target.grad_f(x)
        return forces, reasons, counts

    fx = target.f(x)
    noisy = np.sqrt(2 * config.h) * ensemble.noise_norm > config.r1
    reasons[noisy] = FallbackReason.NOISE_TOO_LARGE
    high = ~noisy & (fx > config.m_f)
    reasons[high] = FallbackReason.F_ABOVE_THRESHOLD
    cand = np.flatnonzero(reasons == FallbackReason.NONE)
    if len(cand):
        counts[cand] = NeighborIndex(w, workers).counts(config.r2, cand)
    few = np.zeros(n, dtype=bool)
    few[cand] = counts[cand] < config.n_star
    reasons[few] = FallbackReason.TOO_FEW_NEIGHBORS
    active = reasons == FallbackReason.NONE

    fallback = ~active
    if np.any(fallback):
        forces[fallback] = target.grad_f(x[fallback])
    if not np.any(active):
        return forces, reasons, counts

    alpha = alpha_d(d, config.eta)
    pairs = NeighborIndex(x, workers).pairs(config.eta)
    sums = np.zeros((n, d))
    if len(pairs):
        pairs = pairs[active[pairs[:, 0]]]
        src, dst = pairs[:, 0], pairs[:, 1]
        dw = w[dst] - w[src]
        dx = x[dst] - x[src]
        sq = np.einsum("ij,ij->i", dx, dx)
        keep = (np.einsum("ij,ij->i", dw, dw) <= config.r2**2) & (sq >= COINCIDENT_TOL**2)
        keep &= np.sqrt(sq) <= config.eta
        src, dst, dx, sq = src[keep], dst[keep], dx[keep], sq[keep]
        if exact:
            df = np.einsum("ij,ij->i", target.grad_f(x[src]), dx)
        else:
            df = fx[dst] - fx[src]
        terms = _term(alpha, df, dx, sq, ensemble.p_vals[dst])
        for k in range(d):
            sums[:, k] = np.bincount(src, weights=terms[:, k], minlength=n)
    forces[active] = sums[active] / counts[active, None]
    return forces, reasons, counts


def select_linsolve_neighbors(x_star: np.ndarray, neighbors: np.ndarray, eta: float) -> np.ndarray:
    """Indices of the ``d`` nearest neighbours within ``eta`` (ties by index).

    Raises :class:`EstimationError` when fewer than ``d`` are available.
    """
    x_star = np.asarray(x_star, dtype=float)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    d = x_star.shape[0]
    dist = np.linalg.norm(neighbors - x_star, axis=1)
    inside = np.flatnonzero(dist <= eta)
    if len(inside) < d:
        raise EstimationError(f"only {len(inside)} neighbours within eta={eta}, need {d}")
    order = np.lexsort((inside, dist[inside]))
    return inside[order[:d]]


def linsolve_gradient(
    x_star: np.ndarray,
    f_star_value: float,
    neighbors: np.ndarray,
    f_neighbors: np.ndarray,
    eta: float | None = None,
) -> np.ndarray:
    """Gradient from ``d`` neighbours by solving ``Dx z = Df``.

    Row ``k`` of ``Dx`` is ``x_k - x_star``, entry ``k`` of ``Df`` is
    ``f(x_k) - f(x_star)``. With ``eta`` given, the ``d`` nearest
    neighbours inside the eta-ball are selected first; otherwise exactly
    ``d`` neighbours must be passed.
    """
    x_star = np.asarray(x_star, dtype=float)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    f_neighbors = np.asarray(f_neighbors, dtype=float)
    d = x_star.shape[0]
    if eta is not None:
        sel = select_linsolve_neighbors(x_star, neighbors, eta)
        neighbors, f_neighbors = neighbors[sel], f_neighbors[sel]
    if neighbors.shape != (d, d):
        raise ValueError(f"need exactly {d} neighbours, got {len(neighbors)}")
    dx = neighbors - x_star
    df = f_neighbors - f_star_value
    cond = np.linalg.cond(dx)
    if not np.isfinite(cond) or cond > LINSOLVE_MAX_COND:
        raise EstimationError(f"neighbour displacements are rank deficient (cond={cond:.3g})")
    return np.linalg.solve(dx, df)
