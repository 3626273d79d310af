"""Langevin chains: LMC, MALA, the unconstrained ensemble sampler (EnLMC)
and the constrained one (CEnLMC), plus a shared-noise coupled runner.

The noise for the update ``m -> m + 1`` of particle ``i`` is always
``gaussian_block(seed, m, N, d)[i]``, so every sampler driven by the same
seed sees the same Brownian increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .core import RngStream, Tag, gaussian_block, proposal_density, uniform_block, uniform_draw
from .estimators import FallbackReason, NeighborIndex, cenlmc_forces, enlmc_forces
from .state import ParticleEnsemble, SamplerConfig

__all__ = [
    "Trajectory",
    "FORCE_CLAMP",
    "snapshot_schedule",
    "lmc_step",
    "mala_step",
    "mala_transition_density",
    "lmc_run",
    "mala_run",
    "enlmc_run",
    "cenlmc_run",
    "coupled_run",
]

FORCE_CLAMP = 1e300
MAX_SNAPSHOTS = 200


def snapshot_schedule(m_iters: int) -> np.ndarray:
    """Stored iterations: all for ``M <= 200``, else every ``ceil(M/200)``-th
    plus the final one."""
    stride = 1 if m_iters <= MAX_SNAPSHOTS else math.ceil(m_iters / MAX_SNAPSHOTS)
    its = np.arange(0, m_iters + 1, stride)
    if its[-1] != m_iters:
        its = np.append(its, m_iters)
    return its


@dataclass
class Trajectory:
    """Output of a run.

    ``reasons[m, i]`` is the :class:`FallbackReason` code of the force used
    for the update ``m -> m + 1`` (``None`` for LMC and MALA, which always
    use the true gradient).
    """

    sampler: str
    config: SamplerConfig
    snapshot_iters: np.ndarray
    snapshots: np.ndarray  # (S, N, d)
    reasons: Optional[np.ndarray] = None  # (M, N) int8
    neighbor_counts: Optional[np.ndarray] = None  # (M, N) int32
    force_max: Optional[np.ndarray] = None  # (M,)
    clamped: Optional[np.ndarray] = None  # (M,) number of clamped components
    accepted: Optional[np.ndarray] = None  # (M,) accepted proposals per iteration
    final: Optional[ParticleEnsemble] = field(default=None, repr=False)

    @property
    def positions(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def fallback_flags(self) -> np.ndarray:
        """``(M, N)`` booleans: the true gradient was evaluated."""
        m = len(self.snapshot_iters) and int(self.snapshot_iters[-1])
        if self.reasons is None:
            return np.ones((m, self.snapshots.shape[1]), dtype=bool)
        return self.reasons != FallbackReason.NONE

    def at(self, iteration: int) -> np.ndarray:
        idx = np.flatnonzero(self.snapshot_iters == iteration)
        if len(idx) == 0:
            raise KeyError(f"iteration {iteration} was not stored")
        return self.snapshots[idx[0]]


class _Recorder:
    def __init__(self, m_iters: int, x0: np.ndarray):
        self.schedule = snapshot_schedule(m_iters)
        self.snaps = np.empty((len(self.schedule),) + x0.shape)
        self.k = 0
        self.take(0, x0)

    def take(self, m: int, x: np.ndarray):
        if self.k < len(self.schedule) and self.schedule[self.k] == m:
            self.snaps[self.k] = x
            self.k += 1


def _initial_positions(config, target, initial, x0):
    if x0 is None:
        x0 = initial.sample(config.seed, config.n)
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 2 or x0.shape[1] != target.dim:
        raise ValueError(f"initial positions must have shape (N, {target.dim})")
    return x0


def lmc_step(x: np.ndarray, target, h: float, noise: np.ndarray) -> np.ndarray:
    """``x - h grad f(x) + sqrt(2h) noise``."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    return x - h * target.grad_f(x) + math.sqrt(2 * h) * np.asarray(noise, dtype=float)


def _log_q(to, frm, grad_frm, h):
    # log N(to; frm - h grad, 2h I) up to the shared normaliser
    r = to - frm + h * grad_frm
    return -np.sum(r * r, axis=-1) / (4 * h)


def _mala_core(x, fx, gx, target, h, noise, u):
    y = x - h * gx + math.sqrt(2 * h) * noise
    fy = target.f(y)
    gy = target.grad_f(y)
    with np.errstate(over="ignore", invalid="ignore"):
        log_ratio = fx - fy + _log_q(x, y, gy, h) - _log_q(y, x, gx, h)
    accept = np.log(u) < log_ratio
    return y, fy, gy, accept


def mala_step(x: np.ndarray, target, h: float, stream: RngStream):
    """One Metropolis-adjusted Langevin step; returns ``(state, accepted)``.

    Draws ``d`` noise variates and one acceptance uniform from ``stream``
    (under :attr:`Tag.MALA`), matching row ``stream.particle`` of
    :func:`mala_run` at ``stream.iteration``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    u = uniform_draw(RngStream(stream.seed, stream.particle, stream.iteration, Tag.MALA), d + 1)
    noise = special.ndtri(u[:d])
    y, _, _, accept = _mala_core(x, target.f(x), target.grad_f(x), target, h, noise, u[d])
    return (y, True) if accept else (x.copy(), False)


def mala_acceptance_probability(x, y, target, h: float) -> float:
    log_ratio = target.f(x) - target.f(y) + _log_q(x, y, target.grad_f(y), h) - _log_q(
        y, x, target.grad_f(x), h
    )
    return float(min(1.0, math.exp(min(log_ratio, 0.0))))


def mala_transition_density(x, y, target, h: float) -> float:
    """Accept-branch kernel density ``q(y | x) a(x, y)`` for ``y != x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    log_q = _log_q(y, x, target.grad_f(x), h) - 0.5 * d * math.log(4 * math.pi * h)
    return float(math.exp(log_q) * mala_acceptance_probability(x, y, target, h))


def lmc_run(config: SamplerConfig, target, initial=None, x0=None) -> Trajectory:
    """Independent LMC chains, one per particle."""
    x = _initial_positions(config, target, initial, x0)
    n, d = x.shape
    rec = _Recorder(config.m_iters, x)
    sq2h = math.sqrt(2 * config.h)
    for m in range(config.m_iters):
        xi = gaussian_block(config.seed, m, n, d)
        x = x - config.h * target.grad_f(x) + sq2h * xi
        rec.take(m + 1, x)
    return Trajectory("lmc", config, rec.schedule, rec.snaps)


def mala_run(config: SamplerConfig, target, initial=None, x0=None, keep_all: bool = False):
    """Independent MALA chains.

    With ``keep_all`` the full ``(M + 1, N, d)`` history is stored,
    ignoring the snapshot thinning (used for long single-chain runs).
    """
    x = _initial_positions(config, target, initial, x0)
    n, d = x.shape
    rec = None if keep_all else _Recorder(config.m_iters, x)
    history = np.empty((config.m_iters + 1, n, d)) if keep_all else None
    if keep_all:
        history[0] = x
    fx, gx = target.f(x), target.grad_f(x)
    accepted = np.zeros(config.m_iters, dtype=np.int64)
    for m in range(config.m_iters):
        u = uniform_block(config.seed, m, n, d + 1, Tag.MALA)
        y, fy, gy, acc = _mala_core(x, fx, gx, target, config.h, special.ndtri(u[:, :d]), u[:, d])
        x = np.where(acc[:, None], y, x)
        fx = np.where(acc, fy, fx)
        gx = np.where(acc[:, None], gy, gx)
        accepted[m] = acc.sum()
        if keep_all:
            history[m + 1] = x
        else:
            rec.take(m + 1, x)
    if keep_all:
        return Trajectory("mala", config, np.arange(config.m_iters + 1), history, accepted=accepted)
    return Trajectory("mala", config, rec.schedule, rec.snaps, accepted=accepted)


def _clamp(forces: np.ndarray):
    bad = ~(np.abs(forces) <= FORCE_CLAMP)  # catches nan and inf too
    if np.any(bad):
        forces = np.where(bad, np.copysign(FORCE_CLAMP, np.nan_to_num(forces, nan=1.0)), forces)
    return forces, int(bad.sum())


def enlmc_run(config: SamplerConfig, target, initial=None, x0=None, workers: int = 1) -> Trajectory:
    """Unconstrained ensemble Langevin sampler (unstable by design).

    Step 0 uses true gradients, since no density values exist yet. Force
    components beyond ``1e300`` (or non-finite) are clamped and counted
    in ``Trajectory.clamped`` so divergence is recorded rather than fatal.
    """
    if config.n < 2:
        raise ValueError("the ensemble sampler needs at least two particles")
    x = _initial_positions(config, target, initial, x0)
    n, d = x.shape
    rec = _Recorder(config.m_iters, x)
    sq2h = math.sqrt(2 * config.h)
    reasons = np.zeros((config.m_iters, n), dtype=np.int8)
    force_max = np.zeros(config.m_iters)
    clamped = np.zeros(config.m_iters, dtype=np.int64)
    p_vals = None
    for m in range(config.m_iters):
        with np.errstate(over="ignore", invalid="ignore"):
            if m == 0:
                forces = target.grad_f(x)
                reasons[m] = FallbackReason.FIRST_ITERATION
            else:
                forces = enlmc_forces(x, p_vals, target, config.eta, NeighborIndex(x, workers))
            forces, clamped[m] = _clamp(forces)
            force_max[m] = np.max(np.abs(forces)) if forces.size else 0.0
            xi = gaussian_block(config.seed, m, n, d)
            x = x - config.h * forces + sq2h * xi
        p_vals = proposal_density(np.einsum("ij,ij->i", xi, xi), config.h, d)
        rec.take(m + 1, x)
    return Trajectory(
        "enlmc", config, rec.schedule, rec.snaps, reasons=reasons, force_max=force_max, clamped=clamped
    )


def _constrained(config, target, initial, x0, workers, with_lmc, exact=False):
    if config.n < 2:
        raise ValueError("the ensemble sampler needs at least two particles")
    if not config.m_f > target.f_star:
        raise ValueError(f"m_f={config.m_f} must exceed f_star={target.f_star}")
    x = _initial_positions(config, target, initial, x0)
    n, d = x.shape
    ens = ParticleEnsemble.initial(x)
    rec = _Recorder(config.m_iters, x)
    z = x.copy() if with_lmc else None
    zrec = _Recorder(config.m_iters, z) if with_lmc else None
    sq2h = math.sqrt(2 * config.h)
    reasons = np.zeros((config.m_iters, n), dtype=np.int8)
    counts = np.zeros((config.m_iters, n), dtype=np.int32)
    force_max = np.zeros(config.m_iters)
    for m in range(config.m_iters):
        forces, reasons[m], counts[m] = cenlmc_forces(ens, config, target, exact=exact, workers=workers)
        force_max[m] = np.max(np.abs(forces)) if forces.size else 0.0
        xi = gaussian_block(config.seed, m, n, d)
        w = ens.x - config.h * forces
        x_new = ens.x - config.h * forces + sq2h * xi
        sq = np.einsum("ij,ij->i", xi, xi)
        ens = ParticleEnsemble(m + 1, x_new, w, proposal_density(sq, config.h, d), np.sqrt(sq))
        rec.take(m + 1, x_new)
        if with_lmc:
            z = z - config.h * target.grad_f(z) + sq2h * xi
            zrec.take(m + 1, z)
    traj = Trajectory(
        "cenlmc",
        config,
        rec.schedule,
        rec.snaps,
        reasons=reasons,
        neighbor_counts=counts,
        force_max=force_max,
        final=ens,
    )
    if not with_lmc:
        return traj
    return traj, Trajectory("lmc", config, zrec.schedule, zrec.snaps)


def cenlmc_run(config: SamplerConfig, target, initial=None, x0=None, workers: int = 1, exact: bool = False) -> Trajectory:
    """Constrained ensemble Langevin sampler.

    ``exact=True`` swaps the finite difference for the exact directional
    derivative; only useful for isolating discretisation error.
    """
    return _constrained(config, target, initial, x0, workers, with_lmc=False, exact=exact)


def coupled_run(config: SamplerConfig, target, initial=None, x0=None, workers: int = 1):
    """CEnLMC particles ``x`` and plain LMC particles ``z`` from the same
    start, driven by identical noise. Returns ``(x_traj, z_traj)``."""
    return _constrained(config, target, initial, x0, workers, with_lmc=True)
