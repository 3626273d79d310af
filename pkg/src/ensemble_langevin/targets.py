"""Potentials ``f`` with ``p ~ exp(-f)``, plus the initial laws used in the
two-dimensional demonstrations.

Every ``f`` / ``grad_f`` accepts an array of shape ``(..., d)`` and maps
over the leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .core import RngStream, Tag, uniform_block, uniform_draw

__all__ = [
    "TargetDensity",
    "GaussianMixture",
    "InitialDistribution",
    "quadratic_target",
    "example1_target",
    "example2_target",
    "example1_initial",
    "example2_initial",
    "scaled_normal_initial",
    "direct_sampler",
    "direct_samples",
    "get_target",
    "get_initial",
    "TARGETS",
    "INITIALS",
]


@dataclass(frozen=True)
class GaussianMixture:
    """Axis-aligned Gaussian mixture; used for direct sampling only."""

    means: np.ndarray  # (K, d)
    scales: np.ndarray  # (K, d) standard deviations
    weights: np.ndarray  # (K,)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_uniforms(self) -> int:
        return self.dim + (1 if len(self.weights) > 1 else 0)

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        d = self.dim
        z = special.ndtri(u[:, :d])
        if len(self.weights) > 1:
            edges = np.cumsum(self.weights)[:-1] / np.sum(self.weights)
            comp = np.searchsorted(edges, u[:, d], side="right")
        else:
            comp = np.zeros(len(u), dtype=int)
        return self.means[comp] + self.scales[comp] * z

    def max_density(self) -> float:
        """Upper bound on the mixture density (exact for one component)."""
        w = self.weights / self.weights.sum()
        peaks = [
            w[k] / np.prod(self.scales[k] * math.sqrt(2 * math.pi)) for k in range(len(w))
        ]
        return float(np.sum(peaks))


def _mixture(means, scales, weights=None) -> GaussianMixture:
    means = np.atleast_2d(np.asarray(means, dtype=float))
    scales = np.broadcast_to(np.asarray(scales, dtype=float), means.shape).copy()
    if weights is None:
        weights = np.full(len(means), 1.0 / len(means))
    return GaussianMixture(means, scales, np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class TargetDensity:
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    grad_f: Callable[[np.ndarray], np.ndarray]
    f_star: float
    smoothness_l: float
    convexity_mu: Optional[float] = None
    name: str = "custom"
    minimizers: tuple = ()
    exact: Optional[GaussianMixture] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.smoothness_l > 0:
            raise ValueError("smoothness_l must be positive")
        if self.convexity_mu is not None and not 0 < self.convexity_mu <= self.smoothness_l:
            raise ValueError("convexity_mu must lie in (0, smoothness_l]")

    @property
    def kappa(self) -> Optional[float]:
        if self.convexity_mu is None:
            return None
        return self.smoothness_l / self.convexity_mu


def quadratic_target(d: int = 1) -> TargetDensity:
    """Standard normal: ``f(x) = |x|^2 / 2``."""
    if d < 1:
        raise ValueError("d must be positive")

    def f(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(x):
        return np.array(x, dtype=float, copy=True)

    return TargetDensity(
        dim=d,
        f=f,
        grad_f=grad,
        f_star=0.0,
        smoothness_l=1.0,
        convexity_mu=1.0,
        name="quadratic",
        minimizers=(np.zeros(d),),
        exact=_mixture(np.zeros((1, d)), 1.0),
    )


_EX1_PRECISION = np.array([1.0, 0.25])


def example1_target() -> TargetDensity:
    """Anisotropic Gaussian ``f = x1^2/2 + x2^2/8``."""

    def f(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(_EX1_PRECISION * x * x, axis=-1)

    def grad(x):
        return _EX1_PRECISION * np.asarray(x, dtype=float)

    return TargetDensity(
        dim=2,
        f=f,
        grad_f=grad,
        f_star=0.0,
        smoothness_l=1.0,
        convexity_mu=0.25,
        name="example1",
        minimizers=(np.zeros(2),),
        exact=_mixture(np.zeros((1, 2)), [1.0, 2.0]),
    )


_EX2_SHIFT = 4.0


def _ex2_logs(x):
    x = np.asarray(x, dtype=float)
    x1, rest = x[..., 0], np.sum(x[..., 1:] ** 2, axis=-1)
    a = -0.5 * (x1 - _EX2_SHIFT) ** 2 - 0.5 * rest
    b = -0.5 * (x1 + _EX2_SHIFT) ** 2 - 0.5 * rest
    return x, a, b


def example2_target() -> TargetDensity:
    """Bimodal mixture with unit-variance modes at ``(+-4, 0)``; not log-concave.

    ``L = 17`` is a safe over-estimate (Hessian is ``I - Cov_w(mean)``
    shifted; the variance term is bounded by the squared mode separation).
    """

    def f(x):
        _, a, b = _ex2_logs(x)
        return -np.logaddexp(a, b)

    def grad(x):
        x, a, b = _ex2_logs(x)
        wa = special.expit(a - b)  # weight of the +4 mode
        g = np.array(x, dtype=float, copy=True)
        g[..., 0] = x[..., 0] - _EX2_SHIFT * (2.0 * wa - 1.0)
        return g

    f_star = -math.log1p(math.exp(-32.0))
    return TargetDensity(
        dim=2,
        f=f,
        grad_f=grad,
        f_star=f_star,
        smoothness_l=17.0,
        convexity_mu=None,
        name="example2",
        minimizers=(np.array([_EX2_SHIFT, 0.0]), np.array([-_EX2_SHIFT, 0.0])),
        exact=_mixture([[_EX2_SHIFT, 0.0], [-_EX2_SHIFT, 0.0]], 1.0),
    )


@dataclass(frozen=True)
class InitialDistribution:
    """Law of ``x^0``. ``sample(seed, n)`` row ``i`` equals
    ``draw(RngStream(seed, i, 0, Tag.INIT))``."""

    mixture: GaussianMixture
    description: str

    @property
    def dim(self) -> int:
        return self.mixture.dim

    def draw(self, stream: RngStream) -> np.ndarray:
        return self.mixture.from_uniforms(uniform_draw(stream, self.mixture.n_uniforms))[0]

    def sample(self, seed: int, n: int) -> np.ndarray:
        u = uniform_block(seed, 0, n, self.mixture.n_uniforms, Tag.INIT)
        return self.mixture.from_uniforms(u)


def example1_initial() -> InitialDistribution:
    return InitialDistribution(
        _mixture([[1.0, 1.0], [-1.0, -1.0]], 1.0),
        "equal mixture of N((1,1), I) and N((-1,-1), I)",
    )


def example2_initial() -> InitialDistribution:
    return InitialDistribution(_mixture(np.zeros((1, 2)), 1.0), "standard normal N(0, I_2)")


def scaled_normal_initial(d: int = 1, scale: float = 2.0, mean: float = 0.0) -> InitialDistribution:
    return InitialDistribution(
        _mixture(np.full((1, d), float(mean)), float(scale)),
        f"N({mean}, {scale}^2 I_{d})",
    )


def direct_sampler(target: TargetDensity, stream: RngStream) -> np.ndarray:
    """One exact draw from ``p ~ exp(-f)`` for a builtin target."""
    if target.exact is None:
        raise ValueError(f"no exact sampler for target {target.name!r}")
    return target.exact.from_uniforms(uniform_draw(stream, target.exact.n_uniforms))[0]


def direct_samples(target: TargetDensity, seed: int, n: int, batch: int = 0) -> np.ndarray:
    """``n`` exact i.i.d. draws; ``batch`` selects an independent block."""
    if target.exact is None:
        raise ValueError(f"no exact sampler for target {target.name!r}")
    u = uniform_block(seed, batch, n, target.exact.n_uniforms, Tag.DIRECT)
    return target.exact.from_uniforms(u)


TARGETS = {
    "quadratic": quadratic_target,
    "example1": example1_target,
    "example2": example2_target,
}

INITIALS = {
    "example1": lambda d=2: example1_initial(),
    "example2": lambda d=2: example2_initial(),
    "standard_normal": lambda d=1: scaled_normal_initial(d, 1.0),
    "wide_normal": lambda d=1: scaled_normal_initial(d, 2.0),
}


def get_target(name: str, dim: Optional[int] = None) -> TargetDensity:
    try:
        factory = TARGETS[name]
    except KeyError:
        raise ValueError(f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None
    if name == "quadratic":
        return factory(dim or 1)
    target = factory()
    if dim is not None and dim != target.dim:
        raise ValueError(f"target {name!r} is {target.dim}-dimensional, not {dim}")
    return target


def get_initial(name: str, dim: int) -> InitialDistribution:
    try:
        factory = INITIALS[name]
    except KeyError:
        raise ValueError(f"unknown initial distribution {name!r}; choose from {sorted(INITIALS)}") from None
    init = factory(dim)
    if init.dim != dim:
        raise ValueError(f"initial distribution {name!r} is {init.dim}-dimensional, not {dim}")
    return init
