"""Dimension constants, proposal densities, tail quadrature and the random
number contract shared by every sampler.

All randomness in the package flows through :func:`uniform_block`, a
counter-based generator: draw ``k`` of particle ``i`` at iteration ``m`` is a
pure function of ``(seed, tag, m, i, k)``. Chunking, thread count and the
number of particles drawn alongside never change a value.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "MAX_DIM",
    "Tag",
    "RngStream",
    "sphere_surface",
    "ball_volume",
    "alpha_d",
    "proposal_density",
    "c_d",
    "uniform_block",
    "gaussian_block",
    "gaussian_draw",
    "uniform_draw",
]

MAX_DIM = 50
_U64 = (1 << 64) - 1


class Tag:
    """Stream namespaces, so that e.g. initial draws never alias step noise."""

    NOISE = 0
    INIT = 1
    ACCEPT = 2
    DIRECT = 3
    PROJECTION = 4
    PROBE = 5
    SYNTHETIC = 6
    PAIRS = 7
    MALA = 8


def _check_dim(d) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds supported maximum {MAX_DIM}")
    return int(d)


def sphere_surface(d: int) -> float:
    """Surface measure of the unit sphere in ``R^d``, ``2 pi^(d/2) / Gamma(d/2)``.

    This is the constant for which ``int_0^eta r^(d-1) S_d dr`` is the
    volume of the eta-ball (``S_1 = 2``, ``S_2 = 2 pi``, ``S_3 = 4 pi``).
    """
    d = _check_dim(d)
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int, eta: float) -> float:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return eta**d * sphere_surface(d) / d


def alpha_d(d: int, eta: float) -> float:
    """Normalisation ``d^2 / (S_d eta^d)`` of the ensemble gradient estimator.

    Raises if the value is not a finite positive double, which happens for
    large ``d`` combined with tiny ``eta``.
    """
    d = _check_dim(d)
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    with np.errstate(over="ignore", under="ignore"):
        denom = sphere_surface(d) * float(eta) ** d
        value = d * d / denom if denom > 0 else math.inf
    if not (math.isfinite(value) and value > 0):
        raise OverflowError(f"alpha_d not representable for d={d}, eta={eta}")
    return value


def proposal_density(noise_norm_sq, h: float, d: int):
    """Density of ``N(w, 2h I_d)`` at ``w + sqrt(2h) xi`` given ``|xi|^2``.

    Works elementwise on arrays of squared noise norms.
    """
    if not h > 0:
        raise ValueError(f"step size h must be positive, got {h}")
    d = _check_dim(d)
    norm = (4.0 * math.pi * h) ** (-d / 2)
    out = norm * np.exp(-0.5 * np.asarray(noise_norm_sq, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def c_d(r1: float, d: int) -> float:
    r"""Gaussian tail constant bounding the noise-constraint fallback rate.

    .. math::

        C_d(R_1) = \frac{S_d}{(2\pi)^{d/2}}
                   \int_{R_1\sqrt{d/2}}^\infty r^{d-1} e^{-r^2/2}\,dr

    Evaluated with adaptive Gauss-Kronrod quadrature on ``[a, a + 40]``; the
    remainder beyond that window is below double precision.
    """
    d = _check_dim(d)
    if r1 < 0:
        raise ValueError(f"r1 must be nonnegative, got {r1}")
    a = r1 * math.sqrt(d) / math.sqrt(2.0)
    # log-space integrand avoids overflow of r^(d-1) at large d
    log_norm = math.log(sphere_surface(d)) - 0.5 * d * math.log(2 * math.pi)

    def integrand(r):
        if r <= 0.0:
            return 0.0 if d > 1 else math.exp(log_norm)
        return math.exp(log_norm + (d - 1) * math.log(r) - 0.5 * r * r)

    # split at the mode sqrt(d-1) so the peak is never missed
    mode = math.sqrt(max(d - 1, 0))
    upper = a + 40.0 if a > mode else mode + 40.0
    points = [p for p in (mode,) if a < p < upper]
    total, _ = integrate.quad(
        integrand, a, upper, points=points or None, epsabs=1e-12, epsrel=1e-12, limit=200
    )
    return min(max(total, 0.0), 1.0)


@dataclass(frozen=True)
class RngStream:
    """Address of one particle's draws at one iteration."""

    seed: int
    particle: int = 0
    iteration: int = 0
    tag: int = Tag.NOISE


@functools.lru_cache(maxsize=256)
def _key(seed: int, tag: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed) & _U64, int(tag)]).generate_state(2, np.uint64)


def _philox(seed: int, tag: int, iteration: int) -> np.random.Philox:
    # iteration occupies the third counter word; draws within an iteration
    # advance the low words, so blocks of distinct iterations never overlap
    if iteration < 0:
        raise ValueError("iteration index must be nonnegative")
    counter = np.array([0, 0, int(iteration), 0], dtype=np.uint64)
    return np.random.Philox(counter=counter, key=_key(int(seed) & _U64, int(tag)))


def _to_unit(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa, centred in its bin: never exactly 0 or 1
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def uniform_block(seed: int, iteration: int, n: int, k: int, tag: int = Tag.NOISE) -> np.ndarray:
    """``(n, k)`` array of U(0,1); row ``i`` is particle ``i``'s stream."""
    if n == 0 or k == 0:
        return np.empty((n, k))
    raw = _philox(seed, tag, iteration).random_raw(n * k)
    return _to_unit(raw).reshape(n, k)


def gaussian_block(seed: int, iteration: int, n: int, d: int, tag: int = Tag.NOISE) -> np.ndarray:
    """``(n, d)`` standard normals by inverse-CDF of :func:`uniform_block`."""
    return special.ndtri(uniform_block(seed, iteration, n, d, tag))


def _stream_uniforms(stream: RngStream, k: int) -> np.ndarray:
    gen = _philox(stream.seed, stream.tag, stream.iteration)
    start = stream.particle * k
    gen.advance(start // 4)  # Philox4x64 emits four words per counter step
    offset = start % 4
    return _to_unit(gen.random_raw(offset + k)[offset:])


def uniform_draw(stream: RngStream, k: int) -> np.ndarray:
    """Single-particle counterpart of :func:`uniform_block`."""
    return _stream_uniforms(stream, k)


def gaussian_draw(stream: RngStream, d: int) -> np.ndarray:
    """``d`` standard normals for one stream; equals row ``stream.particle``
    of the matching :func:`gaussian_block` bit for bit."""
    return special.ndtri(_stream_uniforms(stream, d))
