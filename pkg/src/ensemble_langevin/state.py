"""Sampler tunables and the per-iteration particle state."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .core import proposal_density

__all__ = ["SamplerConfig", "ParticleEnsemble", "PreconditionWarning"]


class PreconditionWarning(UserWarning):
    """A coupling-bound precondition (step size, R2, M_f) is violated."""


@dataclass(frozen=True)
class SamplerConfig:
    h: float = 0.1
    n: int = 10_000
    eta: float = 0.1
    r1: float = 3 * math.sqrt(5) / 10
    r2: float = 1.5
    n_star: int = 1000
    m_f: float = 20.0
    m_iters: int = 100
    seed: int = 0
    rho: float = 0.5

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("r1 and r2 must be nonnegative")
        if self.n_star < 1:
            raise ValueError(f"n_star must be positive, got {self.n_star}")
        if self.m_iters < 0:
            raise ValueError(f"m_iters must be nonnegative, got {self.m_iters}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")

    def replace(self, **changes) -> "SamplerConfig":
        data = asdict(self)
        data.update(changes)
        return SamplerConfig(**data)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def precondition_violations(self, target) -> list[str]:
        """Conditions of the coupling bound that this config breaks."""
        issues = []
        h_max = min(1.0 / target.smoothness_l, 1.0 / target.dim)
        if self.h > h_max:
            issues.append(f"h={self.h} exceeds min(1/L, 1/d)={h_max:g}")
        if max(self.eta, 1.0) > self.r2:
            issues.append(f"r2={self.r2} is below max(eta, 1)={max(self.eta, 1.0):g}")
        if not self.m_f > target.f_star:
            issues.append(f"m_f={self.m_f} is not above f_star={target.f_star:g}")
        return issues

    def warn_preconditions(self, target) -> list[str]:
        issues = self.precondition_violations(target)
        for msg in issues:
            warnings.warn(msg, PreconditionWarning, stacklevel=3)
        return issues


@dataclass
class ParticleEnsemble:
    """State at iteration ``m``.

    ``w`` holds the drift parts ``x^{m-1} - h F^{m-1}``; at ``m = 0`` it is
    ``+inf`` and ``p_vals`` / ``noise_norm`` are NaN (no previous step).
    """

    iteration: int
    x: np.ndarray
    w: np.ndarray
    p_vals: np.ndarray
    noise_norm: np.ndarray

    @classmethod
    def initial(cls, x0: np.ndarray) -> "ParticleEnsemble":
        x0 = np.asarray(x0, dtype=float)
        n = len(x0)
        return cls(0, x0, np.full_like(x0, np.inf), np.full(n, np.nan), np.full(n, np.nan))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def validate(self, h: Optional[float] = None, atol: float = 1e-10) -> None:
        """Raise ``ValueError`` on shape or (when ``h`` is given) state inconsistency."""
        if self.x.ndim != 2:
            raise ValueError("positions must be an (N, d) array")
        n, d = self.x.shape
        if self.w.shape != (n, d) or self.p_vals.shape != (n,) or self.noise_norm.shape != (n,):
            raise ValueError("ensemble arrays have inconsistent shapes")
        if self.iteration == 0:
            return
        if not np.all(self.p_vals > 0):
            raise ValueError("proposal density values must be positive")
        if h is None:
            return
        with np.errstate(invalid="ignore", over="ignore"):
            implied = np.linalg.norm(self.x - self.w, axis=1) / math.sqrt(2 * h)
            ok = np.isfinite(implied)
            if not np.allclose(implied[ok], self.noise_norm[ok], rtol=1e-8, atol=atol):
                raise ValueError("|x - w| / sqrt(2h) does not match the stored noise norms")
            expected = proposal_density(self.noise_norm**2, h, d)
            if not np.allclose(self.p_vals, expected, rtol=1e-12, atol=0.0):
                raise ValueError("stored density values do not match the noise norms")
