"""Langevin Monte Carlo with ensemble (gradient-free) force estimates.

Submodules:

- ``core``: constants, proposal density, tail quadrature, counter-based RNG
- ``targets``: potentials, initial laws and exact samplers
- ``state``: sampler configuration and particle ensembles
- ``estimators``: ensemble force estimators and neighbour search
- ``samplers``: LMC, MALA, EnLMC, CEnLMC and the coupled runner
- ``diagnostics``: gradient-call ratio, Wasserstein distances, probes
- ``calibrate``: parameter suggestions
- ``config``, ``experiments``, ``render``, ``cli``: the experiment runner
"""

__version__ = "0.1.0"

from .core import RngStream, alpha_d, c_d, proposal_density  # noqa: E402
from .diagnostics import gradient_call_ratio, sliced_w1, w1_1d  # noqa: E402
from .estimators import FallbackReason, cenlmc_force, enlmc_force  # noqa: E402
from .samplers import cenlmc_run, coupled_run, enlmc_run, lmc_run, mala_run  # noqa: E402
from .state import ParticleEnsemble, SamplerConfig  # noqa: E402
from .targets import get_initial, get_target  # noqa: E402
