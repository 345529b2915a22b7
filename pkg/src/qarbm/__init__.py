"""Boltzmann-machine learning against an emulated quantum annealer.

The package has three layers:

* a device layer: Chimera graphs (`topology`), an annealer emulator that hides an
  instance-dependent effective temperature behind a noisy Boltzmann sampler
  (`annealer`);
* an inference layer: exact bipartite partition functions, likelihoods and moments
  (`model`), plus estimators that recover the hidden temperature from samples
  (`thermometry`);
* a learning layer: gradient updates, contrastive-divergence baselines and the
  quantum-assisted training loop (`learning`), wired together by the experiment
  harness and CLI (`harness`, `cli`).

Numerical hot spots (visible-layer enumeration, Gibbs half-steps, batch energies)
run on a compiled core when available; `qarbm.kernels.BACKEND` names the active one.
"""

from . import annealer, harness, kernels, learning, model, thermometry, topology
from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DegenerateLandscapeError,
    DegenerateWeightsError,
    EstimationError,
    FormatError,
    InsufficientOverlapError,
    NonPhysicalEstimateError,
    SaturationError,
)

__version__ = "0.1.0"

__all__ = [
    "annealer",
    "harness",
    "kernels",
    "learning",
    "model",
    "thermometry",
    "topology",
    "CapacityError",
    "ConfigError",
    "ConvergenceError",
    "DegenerateLandscapeError",
    "DegenerateWeightsError",
    "EstimationError",
    "FormatError",
    "InsufficientOverlapError",
    "NonPhysicalEstimateError",
    "SaturationError",
    "__version__",
]
