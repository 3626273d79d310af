import math

import numpy as np

from ensemble_langevin.core import proposal_density
from ensemble_langevin.state import ParticleEnsemble


def make_ensemble(n, d, h=0.1, seed=0, spread=1.0, iteration=1):
    """A consistent post-step ensemble with random drift parts and noise."""
    rng = np.random.default_rng(seed)
    w = spread * rng.normal(size=(n, d))
    xi = rng.normal(size=(n, d))
    x = w + math.sqrt(2 * h) * xi
    sq = np.einsum("ij,ij->i", xi, xi)
    return ParticleEnsemble(iteration, x, w, proposal_density(sq, h, d), np.sqrt(sq))


def hand_ensemble(x, w, p, noise_norm):
    as2 = lambda a: np.asarray(a, dtype=float).reshape(len(a), -1)  # noqa: E731
    return ParticleEnsemble(1, as2(x), as2(w), np.asarray(p, dtype=float), np.asarray(noise_norm, dtype=float))
