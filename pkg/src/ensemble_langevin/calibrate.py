"""Parameter suggestions for the constrained ensemble sampler.

Given a gradient budget ``alpha`` (fraction of steps allowed to evaluate
``grad f``) and an accuracy target ``epsilon``, produce step size, ball
radius, noise radius ``r1``, potential threshold ``m_f`` and the neighbour
minimum ``n_star`` implied by the error bounds. ``r2`` depends on the
unknown law of pairwise distances under the target, so it is returned as a
criterion on ``P(|y - z| < r2)``; for builtin targets that probability is
also estimated by direct sampling and inverted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .core import Tag, c_d
from .targets import direct_samples, get_target

__all__ = ["CalibratorInput", "Calibration", "CalibrationError", "solve_r1", "calibrate", "pair_distance_quantile"]

R1_BRACKET = (0.0, 20.0)
R1_XTOL = 1e-8
PAIR_SAMPLES = 100_000


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibratorInput:
    alpha: float
    d: int
    kappa: float
    mu: float
    h: float
    epsilon: float
    rho: float = 0.5
    f_star: float = 0.0
    r2: Optional[float] = None
    n: Optional[int] = None
    n_star: Optional[int] = None
    target: Optional[str] = None
    w1_initial: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.d < 1:
            raise ValueError("d must be positive")
        for name in ("kappa", "mu", "h", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")


@dataclass
class Calibration:
    eta: float
    h_max: float
    h: float
    r1: float
    c_d_r1: float
    m_f: float
    r2: float
    log_n_star: float
    n_star: float
    log_n_star_corollary: float
    n_star_corollary: float
    m_f_corollary: float
    iterations: str
    iterations_value: Optional[float] = None
    r2_criterion: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        """Plain dict; overflowed values (``inf``) become ``None`` for JSON."""
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = None
        return out

    def sampler_fragment(self) -> dict:
        """Fields ready to merge into a :class:`SamplerConfig`."""
        n_star = self.n_star if math.isfinite(self.n_star) else None
        return {
            "h": self.h,
            "eta": self.eta,
            "r1": self.r1,
            "r2": self.r2,
            "m_f": self.m_f,
            "n_star": None if n_star is None else int(math.ceil(n_star)),
        }


def solve_r1(alpha: float, d: int) -> float:
    """Root of ``C_d(r1) = alpha / 3`` by bisection on ``[0, 20]``."""
    level = alpha / 3.0
    lo, hi = R1_BRACKET
    g = lambda r: c_d(r, d) - level  # noqa: E731
    if g(lo) < 0 or g(hi) > 0:
        raise CalibrationError(
            f"C_{d}(r1) = {level:g} has no root in [{lo}, {hi}]; increase alpha"
        )
    return float(optimize.bisect(g, lo, hi, xtol=R1_XTOL))


def _safe_exp(log_value: float) -> float:
    return math.exp(log_value) if log_value < 709.0 else math.inf


def pair_distance_quantile(target_name: str, dim: Optional[int], prob: float, seed: int = 0) -> float:
    """Smallest ``r`` with empirical ``P(|y - z| < r) >= prob`` for target pairs."""
    target = get_target(target_name, dim)
    y = direct_samples(target, seed, PAIR_SAMPLES, batch=2 * Tag.PAIRS)
    z = direct_samples(target, seed, PAIR_SAMPLES, batch=2 * Tag.PAIRS + 1)
    dist = np.linalg.norm(y - z, axis=1)
    return float(np.quantile(dist, prob, method="inverted_cdf"))


def _r2_criterion(inp: CalibratorInput, r2: float) -> dict:
    out = {
        "statement": "choose r2 so that P_{y,z~p}(|y-z| < r2) lies in [p_lower, 1/4]",
        "p_upper": 0.25,
    }
    if inp.n is None or inp.n_star is None:
        out["note"] = "pass n and n_star to evaluate the binomial criterion"
        return out
    n, k = int(inp.n), int(inp.n_star)
    level = inp.alpha / 3.0
    # Stirling-form bound with unit constant: p >= 1 - (level / N^{N*})^{1/N}
    log_term = (math.log(level) - k * math.log(n)) / n
    p_stirling = -math.expm1(log_term)
    # exact binomial: P(Bin(N-1, p) < N*) <= level
    if stats.binom.cdf(k - 1, n - 1, 0.999999) > level:
        p_binom = math.nan
    else:
        p_binom = float(optimize.brentq(lambda p: stats.binom.cdf(k - 1, n - 1, p) - level, 1e-12, 0.999999))
    out.update(p_lower_stirling=p_stirling, p_lower_binomial=p_binom)
    out["feasible"] = bool(np.isfinite(p_binom) and p_binom <= 0.25)
    if inp.target is not None and np.isfinite(p_binom) and p_binom < 1:
        out["r2_from_target"] = pair_distance_quantile(inp.target, inp.d, p_binom)
    return out


def calibrate(inp: CalibratorInput) -> Calibration:
    d, kappa, mu, eps = inp.d, inp.kappa, inp.mu, inp.epsilon
    eta = eps / (kappa * d)
    h_max = eps**2 / (36.0 * kappa**2 * d)
    h = min(inp.h, h_max)
    r1 = solve_r1(inp.alpha, d)
    m_f = 6.0 * kappa * d / inp.alpha + inp.f_star
    r2 = inp.r2 if inp.r2 is not None else max(eta, 1.0)

    spread = r2 * (r2 + r1)
    log_n_star = (
        math.log(36.0)
        + d * math.log(r1)
        + math.log(kappa)
        + 2 * math.log(d)
        + math.log(m_f - inp.f_star)
        - math.log(mu)
        - d * math.log(eta)
        - 2 * math.log(eps)
        + spread / h
    )
    log_cor = (
        d * math.log(r1) + math.log(kappa) + 2 * math.log(d) - math.log(mu) - d * math.log(eta)
        - 2 * math.log(eps) + spread / (2 * h)
    ) / (1.0 - inp.rho)
    n_cor = _safe_exp(log_cor)
    m_f_cor = _safe_exp(inp.rho * log_cor) + inp.f_star

    iterations = "m > kappa^2 * d / epsilon^2 * log(W1(q0, p) / epsilon)"
    it_value = None
    if inp.w1_initial is not None:
        it_value = kappa**2 * d / eps**2 * math.log(inp.w1_initial / eps)

    return Calibration(
        eta=eta,
        h_max=h_max,
        h=h,
        r1=r1,
        c_d_r1=c_d(r1, d),
        m_f=m_f,
        r2=r2,
        log_n_star=log_n_star,
        n_star=_safe_exp(log_n_star),
        log_n_star_corollary=log_cor,
        n_star_corollary=n_cor,
        m_f_corollary=m_f_cor,
        iterations=iterations,
        iterations_value=it_value,
        r2_criterion=_r2_criterion(inp, r2),
    )
